#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bsteer/core.hpp"
#include "bsteer/io_util.hpp"
#include "bsteer/rng.hpp"

namespace bsteer {

// Activation dump ("CBFA"): labeled latent vectors captured at one layer.
//
//   magic   "CBFA"
//   u16     format version (currently 1)
//   u16     reserved (0)
//   u32     layer index
//   u32     vector dimension d_h
//   u64     record count
//   per record:
//     i8    label (+1 safe, -1 unsafe)
//     u16   source id length
//     bytes source id (utf-8)
//     f32[] vector, little-endian
//
// Vectors are stored in single precision; readers widen to double. Records
// with non-finite components are skipped and counted, not fatal.

inline constexpr char kDumpMagic[4] = {'C', 'B', 'F', 'A'};
inline constexpr std::uint16_t kDumpVersion = 1;

struct DumpReadStats {
  std::size_t records_read = 0;
  std::size_t rejected_nonfinite = 0;
};

inline void write_dump(const std::string& path, const SafetyDataset& data) {
  data.validate();
  detail::BinaryWriter w(path);
  w.put_bytes(kDumpMagic, 4);
  w.put<std::uint16_t>(kDumpVersion);
  w.put<std::uint16_t>(0);
  w.put<std::uint32_t>(data.layer_index);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(data.dim));
  w.put<std::uint64_t>(data.records.size());
  for (const auto& r : data.records) {
    if (r.source_id.size() > 0xffff)
      throw DataError("source id longer than 65535 bytes: " + r.source_id.substr(0, 32));
    w.put<std::int8_t>(static_cast<std::int8_t>(r.label));
    w.put<std::uint16_t>(static_cast<std::uint16_t>(r.source_id.size()));
    w.put_bytes(r.source_id.data(), r.source_id.size());
    for (Eigen::Index i = 0; i < r.state.size(); ++i)
      w.put<float>(static_cast<float>(r.state[i]));
  }
  w.finish();
}

inline SafetyDataset read_dump(const std::string& path, DumpReadStats* stats = nullptr) {
  detail::BinaryReader r(path);
  char magic[4];
  r.get_bytes(magic, 4, "magic");
  if (std::memcmp(magic, kDumpMagic, 4) != 0)
    throw FormatError("'" + path + "' is not an activation dump (bad magic)");
  auto version = r.get<std::uint16_t>("version");
  if (version != kDumpVersion)
    throw FormatError("unsupported activation dump version " + std::to_string(version));
  r.get<std::uint16_t>("reserved");
  SafetyDataset data;
  data.layer_index = r.get<std::uint32_t>("layer index");
  auto dim = r.get<std::uint32_t>("dimension");
  if (dim == 0) throw FormatError("activation dump has zero dimension");
  data.dim = static_cast<Eigen::Index>(dim);
  auto count = r.get<std::uint64_t>("record count");
  // Every record occupies at least label + id length + d_h floats; a header
  // declaring more than the file can hold is corruption, caught here before
  // any allocation sized from the header.
  const std::uint64_t min_record = 1 + 2 + static_cast<std::uint64_t>(dim) * 4;
  if (count > 0 && (min_record > r.remaining() || count > r.remaining() / min_record))
    throw CorruptionError("declared dimension/record count exceeds the file size", r.offset());
  DumpReadStats local;
  std::vector<char> idbuf;
  std::vector<char> vecbuf(count > 0 ? static_cast<std::size_t>(dim) * 4 : 0);
  for (std::uint64_t n = 0; n < count; ++n) {
    auto raw_label = r.get<std::int8_t>("label");
    if (raw_label != 1 && raw_label != -1)
      throw CorruptionError("invalid label byte " + std::to_string(int(raw_label)),
                            r.offset() - 1);
    auto id_len = r.get<std::uint16_t>("source id length");
    idbuf.resize(id_len);
    if (id_len > 0) r.get_bytes(idbuf.data(), id_len, "source id");
    r.get_bytes(vecbuf.data(), vecbuf.size(), "vector");
    LabeledState rec;
    rec.label = static_cast<SafetyLabel>(raw_label);
    rec.source_id.assign(idbuf.data(), id_len);
    rec.state.resize(data.dim);
    bool finite = true;
    for (std::uint32_t i = 0; i < dim; ++i) {
      float f = detail::load_le<float>(vecbuf.data() + std::size_t(i) * 4);
      if (!std::isfinite(f)) finite = false;
      rec.state[static_cast<Eigen::Index>(i)] = static_cast<double>(f);
    }
    if (!finite) {
      ++local.rejected_nonfinite;
      continue;
    }
    data.records.push_back(std::move(rec));
    ++local.records_read;
  }
  if (!r.at_eof()) throw CorruptionError("trailing bytes after final record", r.offset());
  if (stats) *stats = local;
  return data;
}

// --- JSON-lines ingestion --------------------------------------------------
// One object per line: {"id": str, "label": +1|-1, "layer": int,
// "vector": [numbers]}.

inline SafetyDataset read_jsonl(const std::string& path, DumpReadStats* stats = nullptr) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  SafetyDataset data;
  DumpReadStats local;
  std::string line;
  std::size_t lineno = 0;
  bool have_layer = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj = nlohmann::json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object())
      throw FormatError(path + ":" + std::to_string(lineno) + ": not a JSON object");
    try {
      LabeledState rec;
      rec.source_id = obj.at("id").get<std::string>();
      rec.label = label_from_int(obj.at("label").get<int>());
      auto layer = obj.at("layer").get<std::uint32_t>();
      if (!have_layer) {
        data.layer_index = layer;
        have_layer = true;
      } else if (layer != data.layer_index) {
        throw FormatError(path + ":" + std::to_string(lineno) + ": mixed layer indices");
      }
      auto vec = obj.at("vector").get<std::vector<double>>();
      if (data.dim == 0) data.dim = static_cast<Eigen::Index>(vec.size());
      if (static_cast<Eigen::Index>(vec.size()) != data.dim)
        throw FormatError(path + ":" + std::to_string(lineno) + ": inconsistent vector length");
      rec.state = Eigen::Map<Vec>(vec.data(), static_cast<Eigen::Index>(vec.size()));
      if (!rec.state.allFinite()) {
        ++local.rejected_nonfinite;
        continue;
      }
      data.records.push_back(std::move(rec));
      ++local.records_read;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (data.dim == 0) throw FormatError(path + ": no records");
  if (stats) *stats = local;
  return data;
}

inline void write_jsonl(const std::string& path, const SafetyDataset& data) {
  data.validate();
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  for (const auto& r : data.records) {
    nlohmann::json obj;
    obj["id"] = r.source_id;
    obj["label"] = label_to_int(r.label);
    obj["layer"] = data.layer_index;
    auto arr = nlohmann::json::array();
    for (Eigen::Index i = 0; i < r.state.size(); ++i) arr.push_back(r.state[i]);
    obj["vector"] = std::move(arr);
    out << obj.dump() << "\n";
  }
  if (!out) throw IoError("write to '" + path + "' failed");
}

// Extension-based ingestion: .jsonl files are parsed as JSON lines,
// everything else as a binary dump.
inline SafetyDataset read_dataset(const std::string& path, DumpReadStats* stats = nullptr) {
  if (path.size() >= 6 && path.substr(path.size() - 6) == ".jsonl")
    return read_jsonl(path, stats);
  return read_dump(path, stats);
}

// --- grouped split ---------------------------------------------------------

struct SplitResult {
  SafetyDataset train;
  SafetyDataset heldout;
};

// Splits by source id, never within one: every state of a sequence lands on
// the same side, so held-out evaluation is uncontaminated.
inline SplitResult split(const SafetyDataset& data, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw DataError("split fraction must be strictly between 0 and 1");
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < data.records.size(); ++i)
    groups[data.records[i].source_id].push_back(i);
  if (groups.size() < 2)
    throw DataError("split needs at least two distinct source ids, got " +
                    std::to_string(groups.size()));

  std::vector<std::string> ids;
  ids.reserve(groups.size());
  for (const auto& [id, _] : groups) ids.push_back(id);  // map iteration: sorted
  Rng rng(seed);
  rng.shuffle(ids);

  auto n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ids.size())));
  n_train = std::clamp<std::size_t>(n_train, 1, ids.size() - 1);

  SplitResult out;
  out.train.dim = out.heldout.dim = data.dim;
  out.train.layer_index = out.heldout.layer_index = data.layer_index;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto& dst = (i < n_train) ? out.train : out.heldout;
    for (std::size_t idx : groups[ids[i]]) dst.records.push_back(data.records[idx]);
  }
  return out;
}

}  // namespace bsteer
