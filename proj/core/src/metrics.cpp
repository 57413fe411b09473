// SPDX-License-Identifier: Apache-2.0
#include "s2ag/metrics.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <numeric>

#include "s2ag/adam.hpp"
#include "s2ag/checkpoint.hpp"
#include "s2ag/error.hpp"

namespace s2ag {

using namespace diff;
using nlohmann::json;

json MetricsReport::to_json() const {
  return {{"maje_mm", maje_mm}, {"mad_mm_per_s2", mad_mm_per_s2}, {"fgd", fgd}, {"sample_count", sample_count}};
}

namespace {

void check_pair(const PoseSequence& a, const PoseSequence& b) {
  if (a.frames != b.frames || a.positions.size() != b.positions.size()) {
    throw Error(ErrorCode::ShapeMismatch, "pose sequences differ in shape: " + std::to_string(a.frames) + " vs " +
                                              std::to_string(b.frames) + " frames");
  }
}

void check_sets(const std::vector<PoseSequence>& a, const std::vector<PoseSequence>& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::ShapeMismatch, "pose sets differ in size");
  if (a.empty()) throw Error(ErrorCode::TooFewSamples, "pose sets are empty");
}

}  // namespace

double maje(const PoseSequence& gt, const PoseSequence& pred) {
  check_pair(gt, pred);
  double s = 0.0;
  for (std::size_t i = 0; i < gt.positions.size(); ++i) s += std::abs(gt.positions[i] - pred.positions[i]);
  return s / static_cast<double>(gt.positions.size());
}

double maje(const std::vector<PoseSequence>& gt, const std::vector<PoseSequence>& pred) {
  check_sets(gt, pred);
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < gt.size(); ++k) {
    check_pair(gt[k], pred[k]);
    for (std::size_t i = 0; i < gt[k].positions.size(); ++i) s += std::abs(gt[k].positions[i] - pred[k].positions[i]);
    n += gt[k].positions.size();
  }
  return s / static_cast<double>(n);
}

namespace {

// Sum of acceleration-difference norms and the number of terms.
std::pair<double, std::size_t> mad_terms(const PoseSequence& gt, const PoseSequence& pred, double fps) {
  check_pair(gt, pred);
  if (gt.frames < 3) throw Error(ErrorCode::SequenceTooShort, "acceleration needs at least 3 frames");
  const double f2 = fps * fps;
  double s = 0.0;
  for (std::size_t t = 1; t + 1 < gt.frames; ++t) {
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      double d2 = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double ag = gt.joint(t + 1, j)[c] - 2.0 * gt.joint(t, j)[c] + gt.joint(t - 1, j)[c];
        const double ap = pred.joint(t + 1, j)[c] - 2.0 * pred.joint(t, j)[c] + pred.joint(t - 1, j)[c];
        d2 += (ag - ap) * (ag - ap);
      }
      s += std::sqrt(d2) * f2;
    }
  }
  return {s, (gt.frames - 2) * kNumJoints};
}

}  // namespace

double mad(const PoseSequence& gt, const PoseSequence& pred, double fps) {
  const auto [s, n] = mad_terms(gt, pred, fps);
  return s / static_cast<double>(n);
}

double mad(const std::vector<PoseSequence>& gt, const std::vector<PoseSequence>& pred, double fps) {
  check_sets(gt, pred);
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < gt.size(); ++k) {
    const auto [sk, nk] = mad_terms(gt[k], pred[k], fps);
    s += sk;
    n += nk;
  }
  return s / static_cast<double>(n);
}

namespace {

void moments(const FeatureSet& x, Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
  const auto n = static_cast<Eigen::Index>(x.size());
  const auto d = static_cast<Eigen::Index>(x.front().size());
  Eigen::MatrixXd m(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(x[static_cast<std::size_t>(i)].size()) != d) {
      throw Error(ErrorCode::ShapeMismatch, "feature vectors differ in length");
    }
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = x[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  mu = m.colwise().mean();
  const Eigen::MatrixXd c = m.rowwise() - mu.transpose();
  cov = (c.transpose() * c) / static_cast<double>(n - 1);
}

// Eigenvalues of a symmetric matrix, with tolerance-level negatives zeroed.
Eigen::VectorXd clipped_eigenvalues(const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>& es, const char* what) {
  if (es.info() != Eigen::Success) throw Error(ErrorCode::NonPSD, std::string(what) + ": eigensolver failed");
  Eigen::VectorXd ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -1e-6 * scale) {
      throw Error(ErrorCode::NonPSD, std::string(what) + " has eigenvalue " + std::to_string(ev(i)));
    }
    ev(i) = std::max(ev(i), 0.0);
  }
  return ev;
}

}  // namespace

double frechet_distance(const FeatureSet& a, const FeatureSet& b) {
  if (a.size() < 2 || b.size() < 2) throw Error(ErrorCode::TooFewSamples, "FGD needs at least 2 samples per set");
  if (a.front().size() != b.front().size()) throw Error(ErrorCode::ShapeMismatch, "feature dimensions differ");
  Eigen::VectorXd mu_a, mu_b;
  Eigen::MatrixXd cov_a, cov_b;
  moments(a, mu_a, cov_a);
  moments(b, mu_b, cov_b);
  // Tr((A B)^1/2) = Tr((A^1/2 B A^1/2)^1/2).
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(cov_a);
  const Eigen::VectorXd la = clipped_eigenvalues(ea, "covariance");
  const Eigen::MatrixXd root_a = ea.eigenvectors() * la.cwiseSqrt().asDiagonal() * ea.eigenvectors().transpose();
  Eigen::MatrixXd inner = root_a * cov_b * root_a;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ei(inner, Eigen::EigenvaluesOnly);
  const double tr_sqrt = clipped_eigenvalues(ei, "covariance product").cwiseSqrt().sum();
  const double d = (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * tr_sqrt;
  return std::max(d, 0.0);
}

json AutoencoderConfig::to_json() const {
  return {{"frames", frames},         {"latent", latent},       {"hidden", hidden},
          {"epochs", epochs},         {"batch_size", batch_size}, {"learning_rate", learning_rate},
          {"seed", seed},             {"mse_threshold", mse_threshold}};
}

AutoencoderConfig AutoencoderConfig::from_json(const json& j) {
  AutoencoderConfig c;
  c.frames = j.value("frames", c.frames);
  c.latent = j.value("latent", c.latent);
  c.hidden = j.value("hidden", c.hidden);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.seed = j.value("seed", c.seed);
  c.mse_threshold = j.value("mse_threshold", c.mse_threshold);
  if (c.frames < 1 || c.latent < 1 || c.hidden < 1 || c.batch_size < 1 || !(c.learning_rate > 0.0)) {
    throw Error(ErrorCode::ConfigInvalid, "invalid autoencoder config");
  }
  return c;
}

FeatureAutoencoder::FeatureAutoencoder(const AutoencoderConfig& cfg)
    : cfg_(std::make_unique<AutoencoderConfig>(cfg)), params_(std::make_unique<ParameterSet>()) {
  Rng rng(cfg.seed);
  const std::size_t in = kNumEdges * 3, h = cfg.hidden;
  enc1_ = Conv1dLayer(*params_, "ae.enc.conv0", in, h, 3, 1, 1, rng);
  enc2_ = Conv1dLayer(*params_, "ae.enc.conv1", h, h, 3, 1, 1, rng);
  enc_fc_ = LinearLayer(*params_, "ae.enc.fc", h, cfg.latent, rng);
  dec_fc_ = LinearLayer(*params_, "ae.dec.fc", cfg.latent, h * cfg.frames, rng);
  dec_conv_ = Conv1dLayer(*params_, "ae.dec.conv", h, in, 3, 1, 1, rng);
  round_to_storage(*params_);
}

Var FeatureAutoencoder::encode(Var x) const {
  if (x.shape().size() != 3 || x.dim(1) != cfg_->frames || x.dim(2) != kNumEdges * 3) {
    throw Error(ErrorCode::ShapeMismatch, "autoencoder input must be [B, T, 27], got " + shape_str(x.shape()));
  }
  return enc_fc_(mean_time(leaky_relu(enc2_(leaky_relu(enc1_(x))))));
}

Var FeatureAutoencoder::decode(Var z) const {
  const Var h = leaky_relu(reshape(dec_fc_(z), {z.dim(0), cfg_->frames, cfg_->hidden}));
  return dec_conv_(h);
}

namespace {

Tensor stack_flat(const std::vector<EdgeDirectionSequence>& seqs, std::size_t lo, std::size_t n, std::size_t frames) {
  Tensor t({n, frames, kNumEdges * 3});
  for (std::size_t k = 0; k < n; ++k) {
    const auto& s = seqs[lo + k];
    if (s.frames != frames) throw Error(ErrorCode::ShapeMismatch, "sequence length differs from autoencoder T");
    std::copy(s.directions.begin(), s.directions.end(), t.data() + k * frames * kNumEdges * 3);
  }
  return t;
}

constexpr std::size_t kEvalBatch = 64;

}  // namespace

FeatureSet FeatureAutoencoder::features(const std::vector<EdgeDirectionSequence>& seqs) const {
  FeatureSet out;
  for (std::size_t lo = 0; lo < seqs.size(); lo += kEvalBatch) {
    const std::size_t n = std::min(kEvalBatch, seqs.size() - lo);
    Graph g;
    const Var z = encode(g.constant(stack_flat(seqs, lo, n, cfg_->frames)));
    for (std::size_t k = 0; k < n; ++k) {
      out.emplace_back(z.value().data() + k * cfg_->latent, z.value().data() + (k + 1) * cfg_->latent);
    }
  }
  return out;
}

FeatureSet FeatureAutoencoder::features(const std::vector<PoseSequence>& poses) const {
  const Skeleton skel = Skeleton::upper_body();
  std::vector<EdgeDirectionSequence> dirs;
  dirs.reserve(poses.size());
  for (const auto& p : poses) dirs.push_back(to_edge_directions(p, skel));
  return features(dirs);
}

double FeatureAutoencoder::reconstruction_mse(const std::vector<EdgeDirectionSequence>& seqs) const {
  if (seqs.empty()) throw Error(ErrorCode::TooFewSamples, "no sequences to reconstruct");
  double s = 0.0;
  for (std::size_t lo = 0; lo < seqs.size(); lo += kEvalBatch) {
    const std::size_t n = std::min(kEvalBatch, seqs.size() - lo);
    Graph g;
    const Var x = g.constant(stack_flat(seqs, lo, n, cfg_->frames));
    s += sum(square(sub(decode(encode(x)), x))).value()[0];
  }
  return s / static_cast<double>(seqs.size() * cfg_->frames * kNumEdges * 3);
}

void FeatureAutoencoder::save(const std::filesystem::path& path) const {
  save_checkpoint(path, *params_, {{"autoencoder", cfg_->to_json()}});
}

std::unique_ptr<FeatureAutoencoder> FeatureAutoencoder::load(const std::filesystem::path& path) {
  const Checkpoint ck = load_checkpoint(path);
  if (!ck.config.contains("autoencoder")) {
    throw Error(ErrorCode::ConfigInvalid, path.string() + " is not an autoencoder checkpoint");
  }
  auto ae = std::make_unique<FeatureAutoencoder>(AutoencoderConfig::from_json(ck.config["autoencoder"]));
  apply_checkpoint(ck, *ae->params_);
  return ae;
}

AutoencoderTraining train_feature_autoencoder(const std::vector<EdgeDirectionSequence>& train,
                                              const std::vector<EdgeDirectionSequence>& heldout,
                                              const AutoencoderConfig& cfg) {
  if (train.empty() || heldout.empty()) throw Error(ErrorCode::TooFewSamples, "autoencoder needs data");
  AutoencoderTraining result;
  result.model = std::make_unique<FeatureAutoencoder>(cfg);
  FeatureAutoencoder& ae = *result.model;
  result.initial_mse = ae.reconstruction_mse(heldout);
  Adam opt(ae.params(), {cfg.learning_rate, 0.9, 0.999, 1e-8, true});
  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<EdgeDirectionSequence> shuffled = train;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(shuffled);
    for (std::size_t lo = 0; lo < shuffled.size(); lo += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, shuffled.size() - lo);
      Graph g;
      const Var x = g.constant(stack_flat(shuffled, lo, n, cfg.frames));
      g.backward(mean(square(sub(ae.decode(ae.encode(x)), x))));
      opt.step();
    }
  }
  round_to_storage(ae.params());
  result.final_mse = ae.reconstruction_mse(heldout);
  if (!(result.final_mse <= cfg.mse_threshold)) {
    throw Error(ErrorCode::ConvergenceFailure, "autoencoder held-out MSE " + std::to_string(result.final_mse) +
                                                   " above threshold " + std::to_string(cfg.mse_threshold));
  }
  return result;
}

double fgd(const std::vector<PoseSequence>& real, const std::vector<PoseSequence>& generated,
           const FeatureAutoencoder& ae) {
  if (real.size() < 2 || generated.size() < 2) {
    throw Error(ErrorCode::TooFewSamples, "FGD needs at least 2 samples per set");
  }
  return frechet_distance(ae.features(real), ae.features(generated));
}

}  // namespace s2ag
