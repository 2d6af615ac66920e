// Copyright 2026 The MeanFlow Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "mflow/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace mflow {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'M', 'F', 'L', 'W'};
constexpr std::uint8_t kDtypeF64 = 1;
const std::string kAdamM = "adam.m/";
const std::string kAdamV = "adam.v/";

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) { bytes(s.data(), s.size()); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw CheckpointError("checkpoint is truncated");
  }
  template <typename U>
  U uint() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<U>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::string& in_;
  std::size_t pos_ = 0;
};

void write_tensor(Writer& w, const std::string& name, const Tensor& t) {
  w.uint(static_cast<std::uint32_t>(name.size()));
  w.str(name);
  w.uint(kDtypeF64);
  w.uint(static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) w.uint(static_cast<std::uint64_t>(d));
  for (double v : t.data()) w.f64(v);
}

Param read_tensor(Reader& r) {
  Param p;
  p.name = r.str(r.uint<std::uint32_t>());
  const auto dtype = r.uint<std::uint8_t>();
  if (dtype != kDtypeF64) {
    throw CheckpointError("tensor " + p.name + " has unsupported dtype code " + std::to_string(dtype));
  }
  const auto rank = r.uint<std::uint32_t>();
  Shape shape(rank);
  std::size_t n = 1;
  for (auto& d : shape) {
    d = static_cast<std::size_t>(r.uint<std::uint64_t>());
    n *= d;
  }
  r.need(n * 8);
  std::vector<double> data(n);
  for (double& v : data) v = r.f64();
  p.value = Tensor(std::move(shape), std::move(data));
  return p;
}

bool same_params(const std::vector<Param>& a, const std::vector<Param>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].name != b[i].name || !(a[i].value == b[i].value)) return false;
  return true;
}

}  // namespace

FieldNet Checkpoint::net() const { return FieldNet::restore(kind, config.net_config(), params); }

bool Checkpoint::operator==(const Checkpoint& o) const {
  return kind == o.kind && config == o.config && step == o.step && rng_state == o.rng_state &&
         adam_step == o.adam_step && teacher_digest == o.teacher_digest &&
         same_params(params, o.params) && same_params(adam_m, o.adam_m) &&
         same_params(adam_v, o.adam_v);
}

std::string serialize_checkpoint(const Checkpoint& c) {
  if ((!c.adam_m.empty() || !c.adam_v.empty()) &&
      (c.adam_m.size() != c.params.size() || c.adam_v.size() != c.params.size())) {
    throw CheckpointError("optimizer moments do not align with parameters");
  }
  json meta;
  meta["kind"] = to_string(c.kind);
  meta["step"] = c.step;
  meta["rng_state"] = c.rng_state;
  meta["adam_step"] = c.adam_step;
  meta["teacher_digest"] = c.teacher_digest;
  meta["config_digest"] = config_digest(c.config);
  meta["config"] = json::parse(to_json(c.config));
  const std::string meta_text = meta.dump();

  Writer w;
  w.bytes(kMagic, 4);
  w.uint(kCheckpointVersion);
  w.uint(static_cast<std::uint64_t>(meta_text.size()));
  w.str(meta_text);
  w.uint(static_cast<std::uint64_t>(c.params.size() + c.adam_m.size() + c.adam_v.size()));
  for (const Param& p : c.params) write_tensor(w, p.name, p.value);
  for (const Param& p : c.adam_m) write_tensor(w, kAdamM + p.name, p.value);
  for (const Param& p : c.adam_v) write_tensor(w, kAdamV + p.name, p.value);
  return w.take();
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.str(4) != std::string(kMagic, 4)) throw CheckpointError("not a checkpoint (bad magic)");
  const auto version = r.uint<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto meta_len = r.uint<std::uint64_t>();
  json meta;
  try {
    meta = json::parse(r.str(static_cast<std::size_t>(meta_len)));
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint metadata is corrupt: ") + e.what());
  }

  Checkpoint c;
  try {
    const std::string kind = meta.at("kind").get<std::string>();
    if (kind == "teacher") {
      c.kind = NetKind::teacher;
    } else if (kind == "student") {
      c.kind = NetKind::student;
    } else {
      throw CheckpointError("unknown network kind " + kind);
    }
    c.step = meta.at("step").get<std::uint64_t>();
    c.rng_state = meta.at("rng_state").get<std::string>();
    c.adam_step = meta.at("adam_step").get<std::uint64_t>();
    c.teacher_digest = meta.at("teacher_digest").get<std::uint64_t>();
    c.config = config_from_json(meta.at("config").dump());
    if (config_digest(c.config) != meta.at("config_digest").get<std::uint64_t>()) {
      throw CheckpointError("checkpoint config digest mismatch");
    }
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint metadata is incomplete: ") + e.what());
  }

  const auto n = r.uint<std::uint64_t>();
  for (std::uint64_t i = 0; i < n; ++i) {
    Param p = read_tensor(r);
    if (p.name.starts_with(kAdamM)) {
      p.name.erase(0, kAdamM.size());
      c.adam_m.push_back(std::move(p));
    } else if (p.name.starts_with(kAdamV)) {
      p.name.erase(0, kAdamV.size());
      c.adam_v.push_back(std::move(p));
    } else {
      c.params.push_back(std::move(p));
    }
  }
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint tensors");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::ios_base::failure("cannot write checkpoint " + tmp.string());
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw std::ios_base::failure("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::ios_base::failure("cannot read checkpoint " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_checkpoint(ss.str());
}

}  // namespace mflow
