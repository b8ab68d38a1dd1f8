#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bsteer/io_util.hpp"
#include "bsteer/train.hpp"
#include "bsteer/version.hpp"

namespace bsteer {

// Model container ("CBFB"): banked barrier networks with full weights.
//
//   magic   "CBFB"
//   u16     format version (currently 1)
//   u16     reserved (0)
//   u32     head count K
//   u32     input dimension d_h
//   per head:
//     u32   block count
//     u32[] block widths
//     per block, f64 little-endian: W row-major, b, ln_gain, ln_shift
//     f64[] head weights (last width), f64 head bias
//
// A JSON sidecar at <path>.json carries category names and the training
// configuration; it is advisory and optional on load.

inline constexpr char kModelMagic[4] = {'C', 'B', 'F', 'B'};
inline constexpr std::uint16_t kModelVersion = 1;

inline void save_model(const std::string& path, const MlpBank& bank,
                       const nlohmann::json& train_config = {}) {
  if (bank.heads.empty()) throw DataError("refusing to save an empty bank");
  detail::BinaryWriter w(path);
  w.put_bytes(kModelMagic, 4);
  w.put<std::uint16_t>(kModelVersion);
  w.put<std::uint16_t>(0);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(bank.heads.size()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(bank.dim()));
  for (const auto& head : bank.heads) {
    if (head.input_dim() != bank.dim())
      throw DataError("bank heads disagree on input dimension");
    w.put<std::uint32_t>(static_cast<std::uint32_t>(head.blocks.size()));
    for (const auto& blk : head.blocks)
      w.put<std::uint32_t>(static_cast<std::uint32_t>(blk.W.rows()));
    for (const auto& blk : head.blocks) {
      for (Eigen::Index r = 0; r < blk.W.rows(); ++r)
        for (Eigen::Index c = 0; c < blk.W.cols(); ++c) w.put<double>(blk.W(r, c));
      for (Eigen::Index i = 0; i < blk.b.size(); ++i) w.put<double>(blk.b[i]);
      for (Eigen::Index i = 0; i < blk.ln_gain.size(); ++i) w.put<double>(blk.ln_gain[i]);
      for (Eigen::Index i = 0; i < blk.ln_shift.size(); ++i) w.put<double>(blk.ln_shift[i]);
    }
    for (Eigen::Index i = 0; i < head.head_w.size(); ++i) w.put<double>(head.head_w[i]);
    w.put<double>(head.head_b);
  }
  w.finish();

  nlohmann::json sidecar;
  sidecar["format"] = "cbfb";
  sidecar["format_version"] = kModelVersion;
  sidecar["artifact_version"] = kArtifactVersion;
  sidecar["category_names"] = bank.category_names;
  if (!train_config.is_null() && !train_config.empty()) sidecar["train_config"] = train_config;
  std::ofstream side(path + ".json");
  if (!side) throw IoError("cannot open '" + path + ".json' for writing");
  side << sidecar.dump(2) << "\n";
  if (!side) throw IoError("write to '" + path + ".json' failed");
}

inline MlpBank load_model(const std::string& path) {
  detail::BinaryReader r(path);
  char magic[4];
  r.get_bytes(magic, 4, "magic");
  if (std::memcmp(magic, kModelMagic, 4) != 0)
    throw FormatError("'" + path + "' is not a model container (bad magic)");
  auto version = r.get<std::uint16_t>("version");
  if (version != kModelVersion)
    throw FormatError("unsupported model container version " + std::to_string(version));
  r.get<std::uint16_t>("reserved");
  auto K = r.get<std::uint32_t>("head count");
  auto dim = r.get<std::uint32_t>("input dimension");
  if (K == 0) throw FormatError("model container has zero heads");
  if (dim == 0) throw FormatError("model container has zero input dimension");

  MlpBank bank;
  for (std::uint32_t k = 0; k < K; ++k) {
    auto n_blocks = r.get<std::uint32_t>("block count");
    std::vector<int> widths;
    for (std::uint32_t i = 0; i < n_blocks; ++i) {
      auto wd = r.get<std::uint32_t>("block width");
      if (wd == 0) throw CorruptionError("zero block width", r.offset());
      widths.push_back(static_cast<int>(wd));
    }
    // Every parameter still to be read is an 8-byte double; a corrupted width
    // would otherwise size an allocation from the corruption itself.
    const std::uint64_t doubles_left = r.remaining() / 8;
    std::uint64_t need = 0;
    std::uint64_t prev = dim;
    bool fits = true;
    for (int wd : widths) {
      std::uint64_t w = static_cast<std::uint64_t>(wd);
      if (prev > 0 && w > doubles_left / prev) {
        fits = false;
        break;
      }
      need += w * prev + 3 * w;
      if (need > doubles_left) {
        fits = false;
        break;
      }
      prev = w;
    }
    if (fits) fits = (need + prev + 1) <= doubles_left;
    if (!fits)
      throw CorruptionError("declared layer widths exceed the file size", r.offset());
    MlpBarrier head(static_cast<Eigen::Index>(dim), widths);
    for (auto& blk : head.blocks) {
      for (Eigen::Index row = 0; row < blk.W.rows(); ++row)
        for (Eigen::Index col = 0; col < blk.W.cols(); ++col)
          blk.W(row, col) = r.get<double>("block weight");
      for (Eigen::Index i = 0; i < blk.b.size(); ++i) blk.b[i] = r.get<double>("block bias");
      for (Eigen::Index i = 0; i < blk.ln_gain.size(); ++i)
        blk.ln_gain[i] = r.get<double>("layer norm gain");
      for (Eigen::Index i = 0; i < blk.ln_shift.size(); ++i)
        blk.ln_shift[i] = r.get<double>("layer norm shift");
    }
    for (Eigen::Index i = 0; i < head.head_w.size(); ++i)
      head.head_w[i] = r.get<double>("head weight");
    head.head_b = r.get<double>("head bias");
    bank.heads.push_back(std::move(head));
  }
  if (!r.at_eof()) throw CorruptionError("trailing bytes after final head", r.offset());

  std::ifstream side(path + ".json");
  if (side) {
    nlohmann::json sidecar = nlohmann::json::parse(side, nullptr, false);
    if (!sidecar.is_discarded() && sidecar.contains("category_names")) {
      auto names = sidecar["category_names"].get<std::vector<std::string>>();
      if (names.size() == bank.heads.size()) bank.category_names = std::move(names);
    }
  }
  if (bank.category_names.empty())
    for (std::uint32_t k = 0; k < K; ++k) bank.category_names.push_back("head" + std::to_string(k));
  return bank;
}

}  // namespace bsteer
