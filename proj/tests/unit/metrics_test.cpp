// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "s2ag/data.hpp"
#include "s2ag/error.hpp"
#include "s2ag/metrics.hpp"
#include "test_util.hpp"

using namespace s2ag;

namespace {

using LMat = std::vector<std::vector<long double>>;

// Cyclic Jacobi eigensolver in extended precision: A = V diag(w) V^T.
void jacobi(LMat a, std::vector<long double>& w, LMat& v) {
  const std::size_t n = a.size();
  v.assign(n, std::vector<long double>(n, 0.0L));
  for (std::size_t i = 0; i < n; ++i) v[i][i] = 1.0L;
  for (int sweep = 0; sweep < 100; ++sweep) {
    long double off = 0.0L;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    }
    if (off < 1e-40L) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::fabs(a[p][q]) < 1e-300L) continue;
        const long double theta = (a[q][q] - a[p][p]) / (2.0L * a[p][q]);
        const long double t = (theta >= 0 ? 1.0L : -1.0L) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0L));
        const long double c = 1.0L / std::sqrt(t * t + 1.0L), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const long double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const long double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const long double vkp = v[k][p], vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }
  w.resize(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = a[i][i];
}

LMat matmul(const LMat& a, const LMat& b) {
  const std::size_t n = a.size();
  LMat c(n, std::vector<long double>(n, 0.0L));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t j = 0; j < n; ++j) c[i][j] += a[i][k] * b[k][j];
    }
  }
  return c;
}

long double frechet_oracle(const FeatureSet& a, const FeatureSet& b) {
  const std::size_t d = a[0].size();
  auto moments = [d](const FeatureSet& x, std::vector<long double>& mu, LMat& cov) {
    mu.assign(d, 0.0L);
    for (const auto& r : x) {
      for (std::size_t i = 0; i < d; ++i) mu[i] += r[i];
    }
    for (auto& m : mu) m /= static_cast<long double>(x.size());
    cov.assign(d, std::vector<long double>(d, 0.0L));
    for (const auto& r : x) {
      for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) cov[i][j] += (r[i] - mu[i]) * (r[j] - mu[j]);
      }
    }
    for (auto& row : cov) {
      for (auto& c : row) c /= static_cast<long double>(x.size() - 1);
    }
  };
  std::vector<long double> ma, mb, w;
  LMat ca, cb, v;
  moments(a, ma, ca);
  moments(b, mb, cb);
  jacobi(ca, w, v);
  LMat root(d, std::vector<long double>(d, 0.0L));
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      for (std::size_t k = 0; k < d; ++k) root[i][j] += v[i][k] * std::sqrt(std::max(w[k], 0.0L)) * v[j][k];
    }
  }
  jacobi(matmul(matmul(root, cb), root), w, v);
  long double tr = 0.0L;
  for (long double x : w) tr += std::sqrt(std::max(x, 0.0L));
  long double dist = 0.0L;
  for (std::size_t i = 0; i < d; ++i) dist += (ma[i] - mb[i]) * (ma[i] - mb[i]) + ca[i][i] + cb[i][i];
  return dist - 2.0L * tr;
}

PoseSequence shifted(const PoseSequence& p, double (*f)(std::size_t t)) {
  PoseSequence q = p;
  for (std::size_t t = 0; t < q.frames; ++t) {
    for (std::size_t j = 0; j < kNumJoints; ++j) q.positions[(t * kNumJoints + j) * 3] += f(t);
  }
  return q;
}

}  // namespace

TEST_CASE("MAJE and MAD analytic cases") {
  Rng rng(1);
  std::vector<PoseSequence> gt;
  for (int i = 0; i < 3; ++i) gt.push_back(test::random_pose(rng, 10));
  CHECK(maje(gt, gt) == 0.0);
  CHECK(mad(gt, gt, 15.0) == 0.0);

  std::vector<PoseSequence> offset, linear, quad;
  for (const auto& p : gt) {
    offset.push_back(shifted(p, [](std::size_t) { return 6.0; }));
    linear.push_back(shifted(p, [](std::size_t t) { return 4.0 * static_cast<double>(t) - 1.0; }));
    quad.push_back(shifted(p, [](std::size_t t) { return 0.5 * static_cast<double>(t * t); }));
  }
  CHECK(maje(gt, offset) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(mad(gt, offset, 15.0) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(std::abs(mad(gt, linear, 15.0)) < 1e-9);
  // x += k t^2 gives a constant second difference 2k per frame^2
  CHECK(mad(gt, quad, 15.0) == doctest::Approx(2.0 * 0.5 * 225.0).epsilon(1e-9));
  CHECK(mad(gt[0], quad[0], 30.0) == doctest::Approx(900.0).epsilon(1e-9));
  CHECK(maje(gt[1], offset[1]) == doctest::Approx(2.0));

  CHECK_THROWS_AS(maje(gt, {}), Error);
  CHECK_THROWS_AS(maje(std::vector<PoseSequence>{}, std::vector<PoseSequence>{}), Error);
  CHECK_THROWS_AS(maje(gt[0], PoseSequence(9, 15.0)), Error);
  CHECK_THROWS_AS(mad(PoseSequence(2, 15.0), PoseSequence(2, 15.0), 15.0), Error);
}

TEST_CASE("Frechet distance identities") {
  Rng rng(2);
  FeatureSet a;
  for (int i = 0; i < 50; ++i) {
    std::vector<double> r(4);
    for (double& v : r) v = rng.normal();
    a.push_back(r);
  }
  CHECK(std::abs(frechet_distance(a, a)) < 1e-9);

  // identical covariance, shifted mean: the distance is the squared shift
  const std::vector<double> mu{1.5, -2.0, 0.25, 3.0};
  FeatureSet b = a;
  for (auto& r : b) {
    for (std::size_t i = 0; i < 4; ++i) r[i] += mu[i];
  }
  double norm2 = 0.0;
  for (double m : mu) norm2 += m * m;
  CHECK(std::abs(frechet_distance(a, b) - norm2) < 1e-6);
  CHECK(frechet_distance(a, b) == doctest::Approx(frechet_distance(b, a)).epsilon(1e-9));

  // different covariances against the extended-precision oracle
  FeatureSet c;
  for (int i = 0; i < 40; ++i) {
    std::vector<double> r(4);
    for (double& v : r) v = rng.uniform(-3.0, 3.0);
    r[1] += 0.8 * r[0];
    c.push_back(r);
  }
  const double fd = frechet_distance(a, c);
  CHECK(fd == doctest::Approx(static_cast<double>(frechet_oracle(a, c))).epsilon(1e-8));
  CHECK(frechet_distance(c, a) == doctest::Approx(fd).epsilon(1e-8));

  FeatureSet one{{1.0, 2.0, 3.0, 4.0}};
  CHECK_THROWS_AS(frechet_distance(one, a), Error);
  CHECK_THROWS_AS(frechet_distance(a, FeatureSet(10, std::vector<double>(3, 0.0))), Error);
}

TEST_CASE("Frechet distance with rank-deficient covariances") {
  // 5-d features living on a 2-d subspace, fewer samples than dimensions in one set
  Rng rng(3);
  auto lift = [](double s, double t) {
    return std::vector<double>{s, t, s + t, 2.0 * s - t, 0.0};
  };
  FeatureSet a, b;
  for (int i = 0; i < 30; ++i) a.push_back(lift(rng.normal(), rng.normal()));
  for (int i = 0; i < 4; ++i) b.push_back(lift(rng.normal() + 1.0, 0.5 * rng.normal()));
  const double fd = frechet_distance(a, b);
  CHECK(fd >= 0.0);
  CHECK(fd == doctest::Approx(static_cast<double>(frechet_oracle(a, b))).epsilon(1e-6));
  CHECK(std::abs(frechet_distance(a, a)) < 1e-9);
}

TEST_CASE("feature autoencoder trains, reloads and is reproducible") {
  SyntheticConfig sc;
  sc.records = 48;
  sc.frames = 8;
  sc.sample_rate = 4000.0;
  const Dataset ds = generate_synthetic(sc);
  const Skeleton skel = Skeleton::upper_body();
  std::vector<EdgeDirectionSequence> train, held;
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const EdgeDirectionSequence d = to_edge_directions(ds.records[i].pose, skel);
    EdgeDirectionSequence w(sc.frames);
    std::copy_n(d.directions.begin(), w.directions.size(), w.directions.begin());
    (i < 40 ? train : held).push_back(w);
  }
  AutoencoderConfig cfg;
  cfg.frames = 8;
  cfg.latent = 6;
  cfg.hidden = 16;
  cfg.epochs = 80;
  cfg.batch_size = 8;
  cfg.mse_threshold = 1.0;
  const AutoencoderTraining run = train_feature_autoencoder(train, held, cfg);
  CHECK(run.final_mse <= 0.2 * run.initial_mse);
  const FeatureSet f = run.model->features(held);
  REQUIRE(f.size() == held.size());
  CHECK(f[0].size() == 6);

  const AutoencoderTraining again = train_feature_autoencoder(train, held, cfg);
  CHECK(again.model->features(held) == f);
  CHECK(again.final_mse == run.final_mse);

  const auto dir = test::temp_dir("ae");
  run.model->save(dir / "ae.s2ck");
  const auto loaded = FeatureAutoencoder::load(dir / "ae.s2ck");
  CHECK(loaded->config().to_json() == cfg.to_json());
  CHECK(loaded->features(held) == f);

  AutoencoderConfig strict = cfg;
  strict.epochs = 1;
  strict.mse_threshold = 1e-9;
  CHECK_THROWS_AS(train_feature_autoencoder(train, held, strict), Error);

  std::vector<PoseSequence> poses;
  for (std::size_t i = 40; i < 48; ++i) {
    PoseSequence p(sc.frames, 15.0);
    std::copy_n(ds.records[i].pose.positions.begin(), p.positions.size(), p.positions.begin());
    poses.push_back(p);
  }
  CHECK(std::abs(fgd(poses, poses, *run.model)) < 1e-9);
}

TEST_CASE("metrics report JSON") {
  MetricsReport r{12.5, 300.0, 1.25, 7};
  const auto j = r.to_json();
  CHECK(j["maje_mm"] == 12.5);
  CHECK(j["sample_count"] == 7);
}
