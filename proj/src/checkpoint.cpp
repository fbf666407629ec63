/*
 * Copyright 2026 The LSTR Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "lstr/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>

#include "lstr/clip_io.hpp"
#include "lstr/error.hpp"

namespace lstr {
namespace {

constexpr char kMagic[] = "LSTRCKP1";

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFU));
}

void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFU));
}

class Reader {
 public:
  Reader(std::string bytes, std::string where) : bytes_(std::move(bytes)), where_(std::move(where)) {}

  const unsigned char* take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw FormatError(where_ + ": truncated checkpoint");
    const auto* p = reinterpret_cast<const unsigned char*>(bytes_.data() + pos_);
    pos_ += n;
    return p;
  }
  std::uint32_t u32() {
    const unsigned char* p = take(4);
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
           static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
  }
  double f64() {
    const unsigned char* p = take(8);
    std::uint64_t bits = 0;
    for (int i = 7; i >= 0; --i) bits = (bits << 8) | p[i];
    return std::bit_cast<double>(bits);
  }
  std::string str(std::size_t n) {
    const unsigned char* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  bool done() const { return pos_ == bytes_.size(); }
  const std::string& where() const { return where_; }

 private:
  std::string bytes_;
  std::string where_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParameterList& params,
                     const std::string& metadata) {
  std::string out(kMagic, 8);
  put_u32(out, static_cast<std::uint32_t>(metadata.size()));
  out += metadata;
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) {
    put_u32(out, static_cast<std::uint32_t>(p->name.size()));
    out += p->name;
    put_u32(out, static_cast<std::uint32_t>(p->value.rank()));
    for (std::size_t d : p->value.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : p->value.values()) put_f64(out, v);
  }
  write_file_atomic(path, out);
}

std::string load_checkpoint(const std::filesystem::path& path, const ParameterList& params, bool partial) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  Reader r(ss.str(), path.string());
  if (r.str(8) != std::string(kMagic, 8)) throw FormatError(path.string() + ": bad magic");
  const std::string metadata = r.str(r.u32());

  std::map<std::string, Parameter*> by_name;
  for (Parameter* p : params) by_name[p->name] = p;
  std::map<std::string, bool> seen;
  const std::uint32_t blocks = r.u32();
  for (std::uint32_t b = 0; b < blocks; ++b) {
    const std::string name = r.str(r.u32());
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 8) throw FormatError(path.string() + ": block '" + name + "' has bad rank");
    Shape shape;
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      shape.push_back(r.u32());
      count *= shape.back();
      if (count > (std::uint64_t{1} << 32)) throw FormatError(path.string() + ": dim overflow");
    }
    std::vector<double> values(static_cast<std::size_t>(count));
    for (double& v : values) v = r.f64();
    auto it = by_name.find(name);
    if (it == by_name.end()) continue;
    if (it->second->value.shape() != shape) {
      throw FormatError(path.string() + ": parameter '" + name + "' has shape " + shape_string(shape) +
                        ", model expects " + shape_string(it->second->value.shape()));
    }
    it->second->value = Tensor(shape, std::move(values));
    seen[name] = true;
  }
  if (!r.done()) throw FormatError(path.string() + ": trailing bytes");
  if (!partial) {
    for (const Parameter* p : params) {
      if (!seen.count(p->name)) throw FormatError(path.string() + ": missing parameter '" + p->name + "'");
    }
  }
  return metadata;
}

}  // namespace lstr
