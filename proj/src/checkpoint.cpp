// SPDX-License-Identifier: Apache-2.0
#include "fastdrive/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "fastdrive/error.hpp"

namespace fastdrive {

namespace {

static_assert(std::endian::native == std::endian::little, "RPCK I/O assumes a little-endian host");

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  void get_floats(float* dst, std::size_t n) {
    need(n * sizeof(float));
    std::memcpy(dst, bytes_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) fail(ErrorCode::kTruncatedFile, "checkpoint ends early");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_tensor_table(const ParamList& entries) {
  std::vector<std::uint8_t> out{'R', 'P', 'C', 'K'};
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    if (e.name.size() > 0xffff || e.tensor.rank() > 0xff) {
      fail(ErrorCode::kInvalidArgument, "entry '" + e.name + "' cannot be encoded");
    }
    put<std::uint16_t>(out, static_cast<std::uint16_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    put<std::uint8_t>(out, static_cast<std::uint8_t>(e.tensor.rank()));
    for (std::size_t d : e.tensor.shape()) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    const auto* p = reinterpret_cast<const std::uint8_t*>(e.tensor.data().data());
    out.insert(out.end(), p, p + e.tensor.numel() * sizeof(float));
  }
  return out;
}

ParamList decode_tensor_table(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "RPCK", 4) != 0) {
    fail(ErrorCode::kBadMagic, "not an RPCK checkpoint");
  }
  Reader r(bytes);
  r.get_string(4);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    fail(ErrorCode::kBadMagic, "unsupported RPCK version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>();
  ParamList out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint16_t>();
    std::string name = r.get_string(name_len);
    const auto rank = r.get<std::uint8_t>();
    Shape shape(rank);
    for (auto& d : shape) d = r.get<std::uint32_t>();
    Tensor t(shape);
    r.get_floats(t.data().data(), t.numel());
    out.push_back({std::move(name), std::move(t)});
  }
  return out;
}

void write_tensor_table(const ParamList& entries, const std::filesystem::path& path) {
  const auto bytes = encode_tensor_table(entries);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIoError, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIoError, "write failed for " + path.string());
}

ParamList read_tensor_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoError, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_tensor_table(bytes);
}

Tensor text_to_tensor(const std::string& text) {
  std::vector<float> v(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) v[i] = static_cast<unsigned char>(text[i]);
  return Tensor({text.size()}, std::move(v));
}

std::string tensor_to_text(const Tensor& t) {
  std::string s(t.numel(), '\0');
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<char>(static_cast<unsigned char>(t.data()[i]));
  return s;
}

}  // namespace fastdrive
