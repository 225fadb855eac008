#pragma once

// Checkpoints are a pair of files sharing a stem: <stem>.manifest (text:
// config hash, then one "name dim dim ..." line per parameter) and
// <stem>.params (raw little-endian float32, parameters in manifest order).

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "ckann/common.hpp"
#include "ckann/model.hpp"

namespace ckann {

inline void save_checkpoint(const ParamStore& params, std::uint64_t config_hash,
                            const std::string& stem) {
  std::string manifest = "ckann-checkpoint 1\n";
  manifest += "config_hash " + hex64(config_hash) + "\n";
  std::vector<float> payload;
  for (const auto& [name, t] : params.all()) {
    manifest += name;
    for (auto d : t.shape()) manifest += " " + std::to_string(d);
    manifest += "\n";
    for (double x : t.values()) payload.push_back(static_cast<float>(x));
  }
  write_file(stem + ".manifest", manifest);

  std::ofstream out(stem + ".params", std::ios::binary);
  if (!out) throw IoError("cannot write " + stem + ".params");
  if (!payload.empty()) {
    // Stored little-endian; this code targets little-endian hosts.
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size() * sizeof(float)));
  }
}

inline std::uint64_t checkpoint_config_hash(const std::string& stem) {
  auto lines = read_lines(stem + ".manifest");
  if (lines.size() < 2 || split_ws(lines[0]).size() != 2 ||
      split_ws(lines[0])[0] != "ckann-checkpoint")
    throw FormatError(stem + ".manifest: bad header");
  auto hash_line = split_ws(lines[1]);
  if (hash_line.size() != 2 || hash_line[0] != "config_hash")
    throw FormatError(stem + ".manifest: missing config_hash");
  return std::stoull(hash_line[1], nullptr, 16);
}

// Loads values into an existing store; names, order, and shapes must match.
inline void load_checkpoint(ParamStore& params, std::uint64_t config_hash,
                            const std::string& stem) {
  auto lines = read_lines(stem + ".manifest");
  if (lines.size() < 2) throw FormatError(stem + ".manifest: truncated");
  if (checkpoint_config_hash(stem) != config_hash)
    throw ConfigMismatch("checkpoint " + stem +
                         " was written with a different config");
  const auto& all = params.all();
  if (lines.size() - 2 != all.size())
    throw FormatError(stem + ".manifest: expected " +
                      std::to_string(all.size()) + " parameters, found " +
                      std::to_string(lines.size() - 2));

  std::ifstream in(stem + ".params", std::ios::binary);
  if (!in) throw IoError("cannot open " + stem + ".params");
  for (std::size_t i = 0; i < all.size(); ++i) {
    auto fields = split_ws(lines[i + 2]);
    if (fields.empty() || fields[0] != all[i].first)
      throw FormatError(stem + ": parameter " + std::to_string(i) +
                        " name mismatch");
    ad::Shape shape;
    for (std::size_t f = 1; f < fields.size(); ++f)
      shape.push_back(std::stoul(fields[f]));
    Tensor t = all[i].second;
    if (shape != t.shape())
      throw FormatError(stem + ": shape mismatch for " + all[i].first);
    std::vector<float> buf(t.size());
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw FormatError(stem + ".params: truncated payload");
    auto& vals = t.mutable_values();
    for (std::size_t j = 0; j < buf.size(); ++j)
      vals[j] = static_cast<double>(buf[j]);
  }
}

}  // namespace ckann
