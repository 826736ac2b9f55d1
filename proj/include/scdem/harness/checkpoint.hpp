#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <json.hpp>

#include "scdem/engine.hpp"

namespace scdem {

// Layout: 8-byte magic, u32 version, u64 header length, JSON header,
// raw little-endian doubles, u64 FNV-1a checksum of everything before it.
inline constexpr char kCheckpointMagic[8] = {'S', 'C', 'D', 'E', 'M', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

class PayloadWriter {
 public:
  nlohmann::json layer(const Dense& d) {
    append(d.weight());
    append(d.bias());
    nlohmann::json j{{"in", d.in_dim()}, {"out", d.out_dim()}};
    j["activation"] = d.act() ? nlohmann::json(to_string(*d.act())) : nlohmann::json(nullptr);
    return j;
  }

  nlohmann::json backbone(const Backbone& bb) {
    nlohmann::json j{{"id", bb.id()}, {"trunk", nlohmann::json::array()}, {"tail", nlohmann::json::array()}};
    for (const auto& l : bb.trunk()) j["trunk"].push_back(layer(l));
    for (const auto& l : bb.tail()) j["tail"].push_back(layer(l));
    return j;
  }

  const std::vector<double>& values() const { return values_; }

 private:
  void append(const Tensor& t) { values_.insert(values_.end(), t.values().begin(), t.values().end()); }
  std::vector<double> values_;
};

class PayloadReader {
 public:
  explicit PayloadReader(std::span<const double> values) : values_(values) {}

  Dense layer(const nlohmann::json& j, bool trainable) {
    const std::size_t in = j.at("in").get<std::size_t>();
    const std::size_t out = j.at("out").get<std::size_t>();
    std::optional<Activation> act;
    if (!j.at("activation").is_null()) act = parse_activation(j.at("activation").get<std::string>());
    Tensor w = Tensor::matrix(in, out, take(in * out), trainable);
    Tensor b({out}, take(out), trainable);
    return Dense(std::move(w), std::move(b), act);
  }

  Backbone backbone(const nlohmann::json& j, bool tail_trainable) {
    std::vector<Dense> trunk, tail;
    for (const auto& l : j.at("trunk")) trunk.push_back(layer(l, false));
    for (const auto& l : j.at("tail")) tail.push_back(layer(l, tail_trainable));
    return Backbone(j.at("id").get<std::size_t>(), std::move(trunk), std::move(tail));
  }

  bool exhausted() const { return pos_ == values_.size(); }

 private:
  std::vector<double> take(std::size_t n) {
    if (pos_ + n > values_.size()) throw IntegrityError("checkpoint payload shorter than its header describes");
    std::vector<double> out(values_.begin() + static_cast<std::ptrdiff_t>(pos_),
                            values_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return out;
  }

  std::span<const double> values_;
  std::size_t pos_ = 0;
};

inline std::uint64_t fnv1a_bytes(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(std::string_view in, std::size_t pos) {
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  return v;
}

}  // namespace detail

/// Serialized bytes of a training state: backbones, snapshots, experts,
/// selectors, counters and the generator state.
inline std::string serialize_state(const TrainState& state, std::uint32_t version = kCheckpointVersion) {
  detail::PayloadWriter w;
  nlohmann::json h;
  h["format"] = "scdem-checkpoint";
  h["version"] = version;
  h["tasks_trained"] = state.tasks_trained;
  h["global_step"] = state.global_step;
  h["expert_dim"] = state.expert_dim;
  h["rng"] = state.rng.state();
  h["backbones"] = nlohmann::json::array();
  for (const auto& bb : state.backbones) h["backbones"].push_back(w.backbone(bb));
  h["snapshots"] = nlohmann::json::array();
  for (const auto& s : state.snapshots) h["snapshots"].push_back(w.backbone(s.backbone()));
  h["experts"] = nlohmann::json::array();
  for (const auto& e : state.experts) {
    nlohmann::json je{{"task_id", e.task_id()}, {"class_set", e.class_set()}, {"frozen", e.frozen()}};
    je["adapter"] = w.layer(e.adapter());
    je["classifier"] = w.layer(e.classifier());
    h["experts"].push_back(std::move(je));
  }
  h["selectors"] = nlohmann::json::array();
  for (const auto& sel : state.selectors) {
    nlohmann::json js{{"backbone_id", sel.backbone_id()}};
    js["hidden"] = w.layer(sel.hidden());
    js["out"] = w.layer(sel.out());
    h["selectors"].push_back(std::move(js));
  }
  h["payload_doubles"] = w.values().size();

  const std::string header = h.dump();
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put<std::uint32_t>(out, version);
  detail::put<std::uint64_t>(out, header.size());
  out += header;
  out.append(reinterpret_cast<const char*>(w.values().data()), w.values().size() * sizeof(double));
  detail::put<std::uint64_t>(out, detail::fnv1a_bytes(out));
  return out;
}

inline TrainState deserialize_state(std::string_view bytes) {
  constexpr std::size_t prefix = sizeof(kCheckpointMagic) + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  if (bytes.size() < prefix + sizeof(std::uint64_t)) throw IntegrityError("checkpoint truncated");
  if (std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw IntegrityError("not a checkpoint file (bad magic)");
  }
  const auto version = detail::get<std::uint32_t>(bytes, sizeof(kCheckpointMagic));
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  }
  const auto header_len = detail::get<std::uint64_t>(bytes, sizeof(kCheckpointMagic) + sizeof(std::uint32_t));
  if (header_len > bytes.size() - prefix - sizeof(std::uint64_t)) throw IntegrityError("checkpoint truncated");
  const std::size_t body_end = bytes.size() - sizeof(std::uint64_t);
  if (detail::get<std::uint64_t>(bytes, body_end) != detail::fnv1a_bytes(bytes.substr(0, body_end))) {
    throw IntegrityError("checkpoint checksum mismatch (file truncated or corrupted)");
  }

  nlohmann::json h;
  try {
    h = nlohmann::json::parse(bytes.substr(prefix, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("checkpoint header unreadable: ") + e.what());
  }
  const std::size_t payload_bytes = body_end - prefix - header_len;
  if (payload_bytes % sizeof(double) != 0 || payload_bytes / sizeof(double) != h.at("payload_doubles").get<std::size_t>()) {
    throw IntegrityError("checkpoint payload size does not match header");
  }
  std::vector<double> payload(payload_bytes / sizeof(double));
  std::memcpy(payload.data(), bytes.data() + prefix + header_len, payload_bytes);

  try {
    detail::PayloadReader r(payload);
    TrainState s;
    for (const auto& jb : h.at("backbones")) s.backbones.push_back(r.backbone(jb, true));
    for (const auto& jb : h.at("snapshots")) s.snapshots.emplace_back(r.backbone(jb, false));
    for (const auto& je : h.at("experts")) {
      Dense adapter = r.layer(je.at("adapter"), true);
      Dense classifier = r.layer(je.at("classifier"), true);
      s.experts.add(Expert(je.at("task_id").get<std::size_t>(), std::move(adapter), std::move(classifier),
                           je.at("class_set").get<std::vector<std::size_t>>(), je.at("frozen").get<bool>()));
    }
    for (const auto& js : h.at("selectors")) {
      Dense hidden = r.layer(js.at("hidden"), true);
      Dense out = r.layer(js.at("out"), true);
      s.selectors.emplace_back(js.at("backbone_id").get<std::size_t>(), std::move(hidden), std::move(out));
    }
    if (!r.exhausted()) throw IntegrityError("checkpoint payload longer than its header describes");
    s.tasks_trained = h.at("tasks_trained").get<std::size_t>();
    s.global_step = h.at("global_step").get<std::size_t>();
    s.expert_dim = h.at("expert_dim").get<std::size_t>();
    s.rng.restore(h.at("rng").get<std::string>());
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("checkpoint header malformed: ") + e.what());
  }
}

inline void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  const std::string bytes = serialize_state(state);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing checkpoint '" + path.string() + "'");
}

inline TrainState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_state(bytes);
}

}  // namespace scdem
