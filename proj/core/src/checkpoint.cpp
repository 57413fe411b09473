// SPDX-License-Identifier: Apache-2.0
#include "s2ag/checkpoint.hpp"

#include <algorithm>

#include "s2ag/binary_io.hpp"
#include "s2ag/error.hpp"

namespace s2ag::diff {

namespace {
constexpr std::string_view kMagic = "S2CK";
}

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params, const nlohmann::json& config) {
  const ParameterSet* sets[] = {&params};
  save_checkpoint(path, sets, config);
}

void save_checkpoint(const std::filesystem::path& path, std::span<const ParameterSet* const> sets,
                     const nlohmann::json& config) {
  nlohmann::json header;
  header["config"] = config;
  header["tensors"] = nlohmann::json::array();
  io::Writer payload;
  for (const ParameterSet* params : sets) {
    params->for_each([&](const Parameter& p) {
      header["tensors"].push_back({{"name", p.name}, {"shape", p.value.shape()}, {"offset", payload.size()}});
      for (double v : p.value.values()) payload.put<float>(static_cast<float>(v));
    });
  }
  const std::string text = header.dump();
  io::Writer out;
  out.put_bytes(kMagic);
  out.put<std::uint32_t>(kCheckpointVersion);
  out.put<std::uint64_t>(text.size());
  out.put_bytes(text);
  out.bytes().insert(out.bytes().end(), payload.bytes().begin(), payload.bytes().end());
  io::write_file_atomic(path, out.bytes());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::vector<unsigned char> bytes = io::read_file(path);
  io::Reader in(bytes);
  if (bytes.size() < kMagic.size() && std::equal(bytes.begin(), bytes.end(), kMagic.begin())) {
    throw Error(ErrorCode::Truncated, path.string() + " ends inside the magic at offset " + std::to_string(bytes.size()));
  }
  if (bytes.size() < kMagic.size() || in.get_bytes(kMagic.size()) != kMagic) {
    throw Error(ErrorCode::BadMagic, path.string() + " is not a checkpoint");
  }
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::VersionUnsupported, "checkpoint version " + std::to_string(version));
  }
  const auto header_len = in.get<std::uint64_t>();
  in.need(header_len);
  nlohmann::json header = nlohmann::json::parse(in.get_bytes(header_len), nullptr, false);
  if (header.is_discarded() || !header.contains("tensors")) {
    throw Error(ErrorCode::BadMagic, "checkpoint header is not valid JSON");
  }
  const std::size_t payload_start = in.offset();
  Checkpoint ckpt;
  ckpt.config = header.value("config", nlohmann::json::object());
  for (const auto& entry : header["tensors"]) {
    Shape shape = entry.at("shape").get<Shape>();
    const auto offset = entry.at("offset").get<std::size_t>();
    Tensor t(shape);
    const std::size_t begin = payload_start + offset;
    if (begin > bytes.size() || t.size() * sizeof(float) > bytes.size() - begin) {
      throw Error(ErrorCode::Truncated, "tensor " + entry.at("name").get<std::string>() + " extends past byte " +
                                            std::to_string(bytes.size()));
    }
    std::vector<unsigned char> slice(bytes.begin() + static_cast<std::ptrdiff_t>(begin),
                                     bytes.begin() + static_cast<std::ptrdiff_t>(begin + t.size() * sizeof(float)));
    io::Reader r(slice);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(r.get<float>());
    ckpt.tensors.emplace(entry.at("name").get<std::string>(), std::move(t));
  }
  return ckpt;
}

void apply_checkpoint(const Checkpoint& ckpt, ParameterSet& params) {
  params.for_each([&](Parameter& p) {
    auto it = ckpt.tensors.find(p.name);
    if (it == ckpt.tensors.end()) throw Error(ErrorCode::ShapeMismatch, "checkpoint lacks parameter " + p.name);
    if (it->second.shape() != p.value.shape()) {
      throw Error(ErrorCode::ShapeMismatch, "parameter " + p.name + " has shape " + shape_str(it->second.shape()) +
                                                " in checkpoint, model expects " + shape_str(p.value.shape()));
    }
    p.value = it->second;
  });
}

void round_to_storage(ParameterSet& params) {
  params.for_each([](Parameter& p) {
    for (double& v : p.value.values()) v = static_cast<double>(static_cast<float>(v));
  });
}

}  // namespace s2ag::diff
