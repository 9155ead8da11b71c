#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "bindecomp/common.hpp"
#include "bindecomp/tensor.hpp"
#include "bindecomp/transformer.hpp"
#include "json.hpp"

namespace bindecomp::neural {

// Checkpoint layout: 8-byte magic, little-endian u32 header length, JSON
// header (kind, config, parameter names and shapes), then every parameter's
// doubles raw in registration order. Doubles are copied bit-for-bit, so a
// load followed by a save reproduces the file exactly on like-endian hosts.

inline constexpr char kCheckpointMagic[8] = {'B', 'D', 'C', 'K', 'P', 'T', '0', '1'};

namespace detail {

inline void append_u32(std::string& out, std::uint32_t v) {
  char buf[4];
  buf[0] = static_cast<char>(v & 0xff);
  buf[1] = static_cast<char>((v >> 8) & 0xff);
  buf[2] = static_cast<char>((v >> 16) & 0xff);
  buf[3] = static_cast<char>((v >> 24) & 0xff);
  out.append(buf, 4);
}

inline std::uint32_t read_u32(const std::string& in, std::size_t at) {
  return static_cast<std::uint32_t>(static_cast<unsigned char>(in[at])) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + 1])) << 8) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + 2])) << 16) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + 3])) << 24);
}

inline nlohmann::ordered_json config_to_json(const TransformerConfig& c) {
  nlohmann::ordered_json j;
  j["d_model"] = c.d_model;
  j["n_heads"] = c.n_heads;
  j["n_enc_layers"] = c.n_enc_layers;
  j["n_dec_layers"] = c.n_dec_layers;
  j["d_ff"] = c.d_ff;
  j["max_seq_len"] = c.max_seq_len;
  j["vocab_src"] = c.vocab_src;
  j["vocab_tgt"] = c.vocab_tgt;
  j["dropout_rate"] = c.dropout_rate;
  j["seed"] = c.seed;
  j["use_positional"] = c.use_positional;
  return j;
}

inline TransformerConfig config_from_json(const nlohmann::json& j) {
  TransformerConfig c;
  c.d_model = j.at("d_model").get<std::size_t>();
  c.n_heads = j.at("n_heads").get<std::size_t>();
  c.n_enc_layers = j.at("n_enc_layers").get<std::size_t>();
  c.n_dec_layers = j.at("n_dec_layers").get<std::size_t>();
  c.d_ff = j.at("d_ff").get<std::size_t>();
  c.max_seq_len = j.at("max_seq_len").get<std::size_t>();
  c.vocab_src = j.at("vocab_src").get<std::size_t>();
  c.vocab_tgt = j.at("vocab_tgt").get<std::size_t>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.use_positional = j.at("use_positional").get<bool>();
  return c;
}

}  // namespace detail

inline std::string serialize_checkpoint(const std::string& kind,
                                        const TransformerConfig& config,
                                        const ParameterSet& params) {
  nlohmann::ordered_json header;
  header["format_version"] = 1;
  header["kind"] = kind;
  header["config"] = detail::config_to_json(config);
  auto& plist = header["params"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < params.count(); ++i) {
    nlohmann::ordered_json p;
    p["name"] = params.names[i];
    p["rows"] = params.tensors[i].rows;
    p["cols"] = params.tensors[i].cols;
    plist.push_back(p);
  }
  const std::string head = header.dump();

  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::append_u32(out, static_cast<std::uint32_t>(head.size()));
  out += head;
  for (const auto& t : params.tensors) {
    const std::size_t bytes = t.data.size() * sizeof(double);
    const std::size_t at = out.size();
    out.resize(at + bytes);
    std::memcpy(out.data() + at, t.data.data(), bytes);
  }
  return out;
}

struct LoadedCheckpoint {
  std::string kind;
  TransformerConfig config;
  ParameterSet params;
};

inline LoadedCheckpoint parse_checkpoint(const std::string& blob) {
  if (blob.size() < sizeof(kCheckpointMagic) + 4 ||
      std::memcmp(blob.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw IoError("not a model checkpoint (bad magic)");
  }
  const std::uint32_t head_len = detail::read_u32(blob, sizeof(kCheckpointMagic));
  const std::size_t head_at = sizeof(kCheckpointMagic) + 4;
  if (blob.size() < head_at + head_len) throw IoError("checkpoint header truncated");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(blob.substr(head_at, head_len));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint header unreadable: ") + e.what());
  }
  if (header.at("format_version").get<int>() != 1) {
    throw IoError("unsupported checkpoint version");
  }

  LoadedCheckpoint out;
  out.kind = header.at("kind").get<std::string>();
  out.config = detail::config_from_json(header.at("config"));

  std::size_t at = head_at + head_len;
  for (const auto& p : header.at("params")) {
    Tensor t(p.at("rows").get<std::size_t>(), p.at("cols").get<std::size_t>());
    const std::size_t bytes = t.data.size() * sizeof(double);
    if (blob.size() < at + bytes) throw IoError("checkpoint data truncated");
    std::memcpy(t.data.data(), blob.data() + at, bytes);
    at += bytes;
    out.params.add(p.at("name").get<std::string>(), std::move(t));
  }
  if (at != blob.size()) throw IoError("checkpoint has trailing bytes");
  return out;
}

inline void save_checkpoint(const std::string& path, const std::string& kind,
                            const TransformerConfig& config, const ParameterSet& params) {
  write_file(path, serialize_checkpoint(kind, config, params));
}

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  return parse_checkpoint(read_file(path));
}

namespace detail {

// Replace a freshly initialized model's tensors with the checkpoint's,
// verifying the registration orders line up.
inline void adopt_params(ParameterSet& dst, ParameterSet&& src, const std::string& what) {
  if (dst.names != src.names) {
    throw IoError(what + ": checkpoint parameter list does not match the architecture");
  }
  for (std::size_t i = 0; i < dst.count(); ++i) {
    if (!dst.tensors[i].same_shape(src.tensors[i])) {
      throw IoError(what + ": shape mismatch for " + dst.names[i]);
    }
  }
  dst.tensors = std::move(src.tensors);
}

}  // namespace detail

inline Seq2Seq seq2seq_from_checkpoint(LoadedCheckpoint&& ck) {
  if (ck.kind != "seq2seq") throw IoError("checkpoint holds a " + ck.kind + " model");
  Seq2Seq model = Seq2Seq::init(ck.config);
  detail::adopt_params(model.params, std::move(ck.params), "seq2seq");
  return model;
}

inline Classifier classifier_from_checkpoint(LoadedCheckpoint&& ck) {
  if (ck.kind != "classifier") throw IoError("checkpoint holds a " + ck.kind + " model");
  Classifier model = Classifier::init(ck.config);
  detail::adopt_params(model.params, std::move(ck.params), "classifier");
  return model;
}

}  // namespace bindecomp::neural
