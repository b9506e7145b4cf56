// Copyright 2026 The gdnorm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "gdnorm/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <openssl/evp.h>

#include "json.hpp"

#include "gdnorm/errors.hpp"

namespace gdnorm {

namespace {

constexpr char kMagic[4] = {'G', 'D', 'N', 'A'};
constexpr const char* kModelFormat = "gdnorm-model";
constexpr const char* kPathFormat = "gdnorm-path";

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <class T>
  void le(T v) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    const U u = std::bit_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::span<const std::uint8_t> bytes(std::size_t n) {
    if (n > in_.size() - pos_) throw CheckpointError("archive truncated");
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  template <class T>
  T le() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    auto b = bytes(sizeof(U));
    U u = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) u |= static_cast<U>(b[i]) << (8 * i);
    return std::bit_cast<T>(u);
  }
  bool done() const { return pos_ == in_.size(); }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

nlohmann::json parse_meta(const Archive& a) {
  try {
    auto j = nlohmann::json::parse(a.metadata);
    if (!j.is_object()) throw CheckpointError("archive metadata is not an object");
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("archive metadata: ") + e.what());
  }
}

void expect_format(const nlohmann::json& meta, const char* format) {
  if (meta.value("format", std::string{}) != format) {
    throw CheckpointError(std::string("archive is not a ") + format + " archive");
  }
}

std::string path_name(std::size_t layer, const char* which, const std::string& prefix) {
  return prefix + std::to_string(layer) + "/" + which;
}

BnPath read_path(const Archive& a, std::size_t layers, const std::string& prefix) {
  BnPath p;
  for (std::size_t l = 0; l < layers; ++l) {
    p.layers.push_back({a.get(path_name(l, "a", prefix)), a.get(path_name(l, "b", prefix))});
  }
  return p;
}

void add_path(Archive& a, const BnPath& p, const std::string& prefix) {
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    a.arrays.push_back({path_name(l, "a", prefix), p.layers[l].a});
    a.arrays.push_back({path_name(l, "b", prefix), p.layers[l].b});
  }
}

}  // namespace

const Tensor& Archive::get(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return a.tensor;
  }
  throw CheckpointError("archive has no array named " + name);
}

bool Archive::contains(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return true;
  }
  return false;
}

std::vector<std::uint8_t> encode_archive(const Archive& archive) {
  Writer w;
  w.bytes(kMagic, 4);
  w.le(archive.version);
  w.le(static_cast<std::uint64_t>(archive.metadata.size()));
  w.bytes(archive.metadata.data(), archive.metadata.size());
  w.le(static_cast<std::uint64_t>(archive.arrays.size()));
  for (const auto& a : archive.arrays) {
    w.le(static_cast<std::uint32_t>(a.name.size()));
    w.bytes(a.name.data(), a.name.size());
    w.le(static_cast<std::uint32_t>(a.tensor.rank()));
    for (std::size_t d : a.tensor.shape()) w.le(static_cast<std::uint64_t>(d));
    for (double v : a.tensor.values()) w.le(v);
  }
  return w.take();
}

Archive decode_archive(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.bytes(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw CheckpointError("bad archive magic");
  Archive a;
  a.version = r.le<std::uint32_t>();
  if (a.version != kArchiveVersion) {
    throw CheckpointError("unsupported archive version " + std::to_string(a.version));
  }
  const auto meta_len = r.le<std::uint64_t>();
  auto meta = r.bytes(meta_len);
  a.metadata.assign(meta.begin(), meta.end());
  const auto count = r.le<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedArray na;
    auto name = r.bytes(r.le<std::uint32_t>());
    na.name.assign(name.begin(), name.end());
    const auto ndim = r.le<std::uint32_t>();
    Shape shape;
    std::uint64_t numel = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      const auto dim = r.le<std::uint64_t>();
      if (dim != 0 && numel > r.remaining() / dim) throw CheckpointError("archive truncated");
      numel *= dim;
      shape.push_back(dim);
    }
    if (numel > r.remaining() / 8) throw CheckpointError("archive truncated");
    std::vector<double> values(numel);
    for (double& v : values) v = r.le<double>();
    na.tensor = Tensor(std::move(shape), std::move(values));
    a.arrays.push_back(std::move(na));
  }
  if (!r.done()) throw CheckpointError("trailing bytes after archive");
  return a;
}

void write_archive(const Archive& archive, const std::string& path) {
  const auto bytes = encode_archive(archive);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed: " + path);
}

namespace {

std::vector<std::uint8_t> slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

Archive read_archive(const std::string& path) {
  const auto bytes = slurp(path);
  return decode_archive(bytes);
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw IoError("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xf]);
  }
  return out;
}

std::string file_sha256(const std::string& path) { return sha256_hex(slurp(path)); }

Archive model_archive(const EmbedNet& net, const std::string& config_hash) {
  const auto& spec = net.spec();
  nlohmann::ordered_json meta;
  meta["format"] = kModelFormat;
  meta["format_version"] = kArchiveVersion;
  meta["config_hash"] = config_hash;
  meta["net"] = {{"input_dim", spec.input_dim},     {"hidden", spec.hidden},
                 {"embed_dim", spec.embed_dim},     {"num_domains", spec.num_domains},
                 {"num_classes", spec.num_classes}, {"tied_bn", spec.tied_bn},
                 {"eps", spec.eps},                 {"momentum", spec.momentum}};
  Archive a;
  a.metadata = meta.dump();
  for (const auto& [name, t] : net.named_tensors()) a.arrays.push_back({name, *t});
  add_path(a, mean_path(estimate_gp(net)), "mean_path/");
  return a;
}

EmbedNet load_model(const Archive& archive) {
  const auto meta = parse_meta(archive);
  expect_format(meta, kModelFormat);
  NetSpec spec;
  try {
    const auto& n = meta.at("net");
    spec.input_dim = n.at("input_dim").get<std::size_t>();
    spec.hidden = n.at("hidden").get<std::vector<std::size_t>>();
    spec.embed_dim = n.at("embed_dim").get<std::size_t>();
    spec.num_domains = n.at("num_domains").get<std::size_t>();
    spec.num_classes = n.at("num_classes").get<std::size_t>();
    spec.tied_bn = n.at("tied_bn").get<bool>();
    spec.eps = n.at("eps").get<double>();
    spec.momentum = n.at("momentum").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint network description: ") + e.what());
  }
  EmbedNet net(spec, 0);
  for (const auto& [name, t] : net.named_tensors()) {
    try {
      net.set_tensor(name, archive.get(name));
    } catch (const CheckpointError&) {
      throw;
    } catch (const Error& e) {
      throw CheckpointError(e.what());
    }
  }
  return net;
}

std::string checkpoint_config_hash(const Archive& archive) {
  const auto meta = parse_meta(archive);
  expect_format(meta, kModelFormat);
  return meta.value("config_hash", std::string{});
}

BnPath checkpoint_mean_path(const Archive& archive) {
  const auto meta = parse_meta(archive);
  expect_format(meta, kModelFormat);
  std::size_t layers = 0;
  try {
    layers = meta.at("net").at("hidden").size() + 1;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint network description: ") + e.what());
  }
  return read_path(archive, layers, "mean_path/");
}

Archive path_archive(const BnPath& path, const std::string& kind, double lambda,
                     std::uint64_t seed) {
  nlohmann::ordered_json meta;
  meta["format"] = kPathFormat;
  meta["format_version"] = kArchiveVersion;
  meta["kind"] = kind;
  meta["layers"] = path.layers.size();
  meta["lambda"] = lambda;
  meta["seed"] = seed;
  Archive a;
  a.metadata = meta.dump();
  add_path(a, path, "path/");
  return a;
}

BnPath load_path(const Archive& archive) {
  const auto meta = parse_meta(archive);
  expect_format(meta, kPathFormat);
  const auto layers = meta.value("layers", std::size_t{0});
  if (layers == 0) throw CheckpointError("path archive without layers");
  BnPath p = read_path(archive, layers, "path/");
  try {
    p.validate(p.widths());
  } catch (const Error& e) {
    throw CheckpointError(e.what());
  }
  return p;
}

BnPath load_path(const Archive& archive, std::span<const std::size_t> expected_widths) {
  BnPath p = load_path(archive);
  try {
    p.validate(expected_widths);
  } catch (const Error& e) {
    throw CheckpointError(std::string("path does not fit the model: ") + e.what());
  }
  return p;
}

}  // namespace gdnorm
