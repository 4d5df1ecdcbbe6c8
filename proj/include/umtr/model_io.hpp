#pragma once

#include <zlib.h>

#include <cstdint>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "umtr/binary_io.hpp"
#include "umtr/engine.hpp"
#include "umtr/error.hpp"

namespace umtr {

// Model file layout (all integers little-endian):
//   "UMTR" | u16 version | config | schema | per feature: coder, range,
//   marginal, classifier | u32 CRC-32 of every preceding byte
inline constexpr char kModelMagic[4] = {'U', 'M', 'T', 'R'};
inline constexpr std::uint16_t kModelVersion = 1;

inline std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  return static_cast<std::uint32_t>(
      ::crc32(crc, bytes.data(), static_cast<uInt>(bytes.size())));
}

namespace model_io_detail {

inline void write_config(ByteWriter& w, const EngineConfig& c) {
  w.u32(c.n_bins);
  w.f64(c.top_p);
  w.u32(c.k_dup);
  w.f64(c.alpha);
  w.u32(c.tree.rounds);
  w.f64(c.tree.learning_rate);
  w.u32(c.tree.max_depth);
  w.f64(c.tree.min_child_weight);
  w.f64(c.tree.lambda);
  w.u32(c.tree.n_hist_bins);
  w.u8(c.tree.exact_splits ? 1 : 0);
  w.u64(c.seed);
}

inline EngineConfig read_config(ByteReader& r) {
  EngineConfig c;
  c.n_bins = r.u32();
  c.top_p = r.f64();
  c.k_dup = r.u32();
  c.alpha = r.f64();
  c.tree.rounds = r.u32();
  c.tree.learning_rate = r.f64();
  c.tree.max_depth = r.u32();
  c.tree.min_child_weight = r.f64();
  c.tree.lambda = r.f64();
  c.tree.n_hist_bins = r.u32();
  c.tree.exact_splits = r.u8() != 0;
  c.seed = r.u64();
  return c;
}

inline void write_schema(ByteWriter& w, const Schema& schema) {
  w.u32(static_cast<std::uint32_t>(schema.size()));
  for (const Feature& f : schema) {
    w.str(f.name);
    w.u8(static_cast<std::uint8_t>(f.kind.tag));
    w.u32(f.kind.cardinality);
    w.u32(static_cast<std::uint32_t>(f.labels.size()));
    for (const auto& l : f.labels) w.str(l);
  }
}

inline Schema read_schema(ByteReader& r) {
  Schema schema(r.count(13));
  for (Feature& f : schema) {
    f.name = r.str();
    const std::uint8_t tag = r.u8();
    if (tag > 1) throw ModelFormatError("unknown feature kind");
    f.kind.tag = static_cast<FeatureKind::Tag>(tag);
    f.kind.cardinality = r.u32();
    f.labels.resize(r.count(4));
    for (auto& l : f.labels) l = r.str();
  }
  return schema;
}

inline void write_coder(ByteWriter& w, const FeatureCoder& c) {
  w.u8(static_cast<std::uint8_t>(c.kind));
  switch (c.kind) {
    case FeatureCoder::Kind::kBinned:
      w.u32(static_cast<std::uint32_t>(c.bins.n_bins()));
      for (double e : c.bins.edges) w.f64(e);
      w.f64(c.bins.alpha);
      break;
    case FeatureCoder::Kind::kCategorical:
      w.u32(c.cardinality);
      break;
    case FeatureCoder::Kind::kConstant:
      w.f64(c.constant);
      break;
  }
}

inline FeatureCoder read_coder(ByteReader& r) {
  const std::uint8_t kind = r.u8();
  switch (kind) {
    case 0: {
      BinSpec spec;
      const std::uint32_t b = r.count(8);
      if (b < 1) throw ModelFormatError("bin spec with no bins");
      spec.edges.resize(std::size_t{b} + 1);
      for (double& e : spec.edges) e = r.f64();
      spec.alpha = r.f64();
      for (std::size_t k = 0; k + 1 < spec.edges.size(); ++k) {
        if (!(spec.edges[k] < spec.edges[k + 1])) throw ModelFormatError("bin edges not increasing");
      }
      return FeatureCoder::binned(std::move(spec));
    }
    case 1:
      return FeatureCoder::categorical(r.u32());
    case 2:
      return FeatureCoder::constant_value(r.f64());
    default:
      throw ModelFormatError("unknown coder kind");
  }
}

}  // namespace model_io_detail

inline std::vector<std::uint8_t> serialize_model(const UnmaskingModel& model) {
  using namespace model_io_detail;
  ByteWriter w;
  for (char c : kModelMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u16(kModelVersion);
  write_config(w, model.config);
  write_schema(w, model.schema);
  for (std::size_t j = 0; j < model.n_features(); ++j) {
    write_coder(w, model.coders[j]);
    w.f64(model.train_ranges[j].first);
    w.f64(model.train_ranges[j].second);
    w.u32(static_cast<std::uint32_t>(model.marginals[j].size()));
    for (double p : model.marginals[j]) w.f64(p);
    gbdt::write_classifier(w, model.classifiers[j]);
  }
  const std::uint32_t crc = crc32_of(w.buffer());
  w.u32(crc);
  return std::move(w).take();
}

/// Validates magic, version and checksum before decoding anything else; a
/// failure never yields a partially loaded model.
inline UnmaskingModel deserialize_model(std::span<const std::uint8_t> bytes) {
  using namespace model_io_detail;
  constexpr std::size_t kHeader = 4 + 2;
  if (bytes.size() < kHeader + 4) throw TruncatedModelError("model file truncated");
  if (!std::equal(std::begin(kModelMagic), std::end(kModelMagic), bytes.begin(),
                  [](char a, std::uint8_t b) { return static_cast<std::uint8_t>(a) == b; })) {
    throw ModelFormatError("not a model file (bad magic)");
  }
  ByteReader header(bytes.subspan(4, 2));
  const std::uint16_t version = header.u16();
  if (version != kModelVersion) {
    throw VersionError("unsupported model format version " + std::to_string(version) +
                       " (this build reads version " + std::to_string(kModelVersion) + ")");
  }
  const auto body = bytes.first(bytes.size() - 4);
  ByteReader trailer(bytes.last(4));
  if (crc32_of(body) != trailer.u32()) throw ChecksumError("model file checksum mismatch");

  ByteReader r(body.subspan(kHeader));
  UnmaskingModel model;
  model.config = read_config(r);
  model.schema = read_schema(r);
  const std::size_t d = model.schema.size();
  for (std::size_t j = 0; j < d; ++j) {
    model.coders.push_back(read_coder(r));
    const double lo = r.f64();
    const double hi = r.f64();
    model.train_ranges.emplace_back(lo, hi);
    std::vector<double> marginal(r.count(8));
    for (double& p : marginal) p = r.f64();
    model.marginals.push_back(std::move(marginal));
    model.classifiers.push_back(gbdt::read_classifier(r));
    if (model.classifiers.back().n_classes() != model.coders.back().n_classes() ||
        model.marginals.back().size() != model.coders.back().n_classes() ||
        model.classifiers.back().n_features() != d) {
      throw ModelFormatError("inconsistent feature block " + std::to_string(j));
    }
  }
  if (r.remaining() != 0) throw ModelFormatError("trailing bytes in model file");
  try {
    model.config.validate();
  } catch (const ArgumentError& e) {
    throw ModelFormatError(std::string("invalid config block: ") + e.what());
  }
  return model;
}

inline void save_model(const UnmaskingModel& model, const std::string& path) {
  const auto bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write to '" + path + "' failed");
}

inline UnmaskingModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelFormatError("cannot open model file '" + path + "'");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace umtr
