#include "imc/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "imc/error.hpp"

namespace imc {

namespace {

constexpr char kMagic[4] = {'I', 'M', 'C', 'F'};

void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}
  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) fail(ErrorKind::Integrity, "checkpoint truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::F64:
    case DType::I64: return 8;
    case DType::U8:
    case DType::I8: return 1;
  }
  fail(ErrorKind::Integrity, "unknown dtype tag");
}

std::uint64_t count_of(const std::vector<std::uint64_t>& shape) {
  std::uint64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

template <class T>
std::vector<T> decode_words(const Checkpoint::Entry& e) {
  std::vector<T> out(e.payload.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t w = 0;
    for (int b = 0; b < 8; ++b) w |= std::uint64_t{e.payload[i * 8 + b]} << (8 * b);
    out[i] = std::bit_cast<T>(w);
  }
  return out;
}

}  // namespace

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  return static_cast<std::uint32_t>(crc32(crc, bytes.data(), static_cast<uInt>(bytes.size())));
}

void Checkpoint::add(Entry e) {
  if (has(e.name)) fail(ErrorKind::Contract, "checkpoint: duplicate entry '" + e.name + "'");
  entries_.push_back(std::move(e));
}

void Checkpoint::put(const std::string& name, const Tensor& t) {
  std::vector<std::uint64_t> shape(t.shape().begin(), t.shape().end());
  put_f64(name, std::move(shape), t.data());
}

void Checkpoint::put_f64(const std::string& name, std::vector<std::uint64_t> shape, std::span<const double> v) {
  Entry e{name, DType::F64, std::move(shape), {}};
  e.payload.reserve(v.size() * 8);
  for (double d : v) put_le(e.payload, std::bit_cast<std::uint64_t>(d), 8);
  add(std::move(e));
}

void Checkpoint::put_i64(const std::string& name, std::vector<std::uint64_t> shape, std::span<const std::int64_t> v) {
  Entry e{name, DType::I64, std::move(shape), {}};
  for (auto d : v) put_le(e.payload, static_cast<std::uint64_t>(d), 8);
  add(std::move(e));
}

void Checkpoint::put_u8(const std::string& name, std::vector<std::uint64_t> shape, std::span<const std::uint8_t> v) {
  add({name, DType::U8, std::move(shape), {v.begin(), v.end()}});
}

void Checkpoint::put_i8(const std::string& name, std::vector<std::uint64_t> shape, std::span<const std::int8_t> v) {
  Entry e{name, DType::I8, std::move(shape), {}};
  for (auto d : v) e.payload.push_back(static_cast<std::uint8_t>(d));
  add(std::move(e));
}

void Checkpoint::put_string(const std::string& name, const std::string& s) {
  put_u8(name, {s.size()}, std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return true;
  return false;
}

const Checkpoint::Entry& Checkpoint::entry(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e;
  fail(ErrorKind::Data, "checkpoint: missing entry '" + name + "'");
}

Tensor Checkpoint::tensor(const std::string& name) const {
  const auto& e = entry(name);
  Shape shape(e.shape.begin(), e.shape.end());
  return Tensor(std::move(shape), f64(name));
}

std::vector<double> Checkpoint::f64(const std::string& name) const {
  const auto& e = entry(name);
  if (e.dtype != DType::F64) fail(ErrorKind::Data, "checkpoint: '" + name + "' is not f64");
  return decode_words<double>(e);
}

std::vector<std::int64_t> Checkpoint::i64(const std::string& name) const {
  const auto& e = entry(name);
  if (e.dtype != DType::I64) fail(ErrorKind::Data, "checkpoint: '" + name + "' is not i64");
  return decode_words<std::int64_t>(e);
}

std::vector<std::uint8_t> Checkpoint::u8(const std::string& name) const {
  const auto& e = entry(name);
  if (e.dtype != DType::U8) fail(ErrorKind::Data, "checkpoint: '" + name + "' is not u8");
  return e.payload;
}

std::vector<std::int8_t> Checkpoint::i8(const std::string& name) const {
  const auto& e = entry(name);
  if (e.dtype != DType::I8) fail(ErrorKind::Data, "checkpoint: '" + name + "' is not i8");
  std::vector<std::int8_t> out(e.payload.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<std::int8_t>(e.payload[i]);
  return out;
}

double Checkpoint::scalar(const std::string& name) const {
  auto v = f64(name);
  if (v.size() != 1) fail(ErrorKind::Data, "checkpoint: '" + name + "' is not a scalar");
  return v[0];
}

std::int64_t Checkpoint::integer(const std::string& name) const {
  auto v = i64(name);
  if (v.size() != 1) fail(ErrorKind::Data, "checkpoint: '" + name + "' is not a scalar");
  return v[0];
}

std::string Checkpoint::string(const std::string& name) const {
  auto b = u8(name);
  return std::string(b.begin(), b.end());
}

std::vector<std::uint8_t> Checkpoint::serialize() const {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le(out, kCheckpointVersion, 4);
  put_le(out, entries_.size(), 4);
  for (const auto& e : entries_) {
    put_le(out, e.name.size(), 4);
    out.insert(out.end(), e.name.begin(), e.name.end());
    out.push_back(static_cast<std::uint8_t>(e.dtype));
    put_le(out, e.shape.size(), 4);
    for (auto d : e.shape) put_le(out, d, 8);
    out.insert(out.end(), e.payload.begin(), e.payload.end());
  }
  put_le(out, crc32_of(out), 4);
  return out;
}

Checkpoint Checkpoint::parse(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    fail(ErrorKind::Integrity, "checkpoint: bad magic");
  const auto body = bytes.first(bytes.size() - 4);
  Reader tail(bytes.last(4));
  if (tail.le(4) != crc32_of(body)) fail(ErrorKind::Integrity, "checkpoint: checksum mismatch");

  Reader r(body);
  r.take(4);
  const auto version = r.le(4);
  if (version != kCheckpointVersion)
    fail(ErrorKind::Integrity, "checkpoint: format version " + std::to_string(version) + ", expected " +
                                   std::to_string(kCheckpointVersion));
  const auto count = r.le(4);
  Checkpoint ck;
  for (std::uint64_t i = 0; i < count; ++i) {
    Entry e;
    const auto name_len = r.le(4);
    auto name = r.take(name_len);
    e.name.assign(name.begin(), name.end());
    e.dtype = static_cast<DType>(r.le(1));
    const auto ndim = r.le(4);
    for (std::uint64_t d = 0; d < ndim; ++d) e.shape.push_back(r.le(8));
    auto payload = r.take(count_of(e.shape) * dtype_size(e.dtype));
    e.payload.assign(payload.begin(), payload.end());
    ck.add(std::move(e));
  }
  if (r.pos() != body.size()) fail(ErrorKind::Integrity, "checkpoint: trailing bytes");
  return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::Data, "cannot write " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) fail(ErrorKind::Data, "write failed: " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::Data, "cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return parse(bytes);
}

}  // namespace imc
