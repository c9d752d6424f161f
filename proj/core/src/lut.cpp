#include "lutnet/lut.hpp"

#include <cstdio>
#include <istream>
#include <ostream>

#include "binio.hpp"
#include "lutnet/errors.hpp"

namespace lutnet {

namespace {

constexpr char kLutMagic[4] = {'L', 'U', 'T', '1'};
constexpr unsigned kMaxElementBits = 127;

UWide get_bits(const std::vector<std::uint64_t>& words, std::uint64_t pos, unsigned width) {
  const std::uint64_t w = pos >> 6;
  const unsigned off = static_cast<unsigned>(pos & 63);
  UWide v = static_cast<UWide>(words[w]) >> off;
  unsigned have = 64 - off;
  if (have < width) {
    v |= static_cast<UWide>(words[w + 1]) << have;
    have += 64;
    if (have < width) v |= static_cast<UWide>(words[w + 2]) << have;
  }
  if (width < 128) v &= (static_cast<UWide>(1) << width) - 1;
  return v;
}

void set_bits(std::vector<std::uint64_t>& words, std::uint64_t pos, unsigned width, UWide value) {
  for (unsigned done = 0; done < width;) {
    const std::uint64_t w = (pos + done) >> 6;
    const unsigned off = static_cast<unsigned>((pos + done) & 63);
    const unsigned take = std::min(64 - off, width - done);
    const std::uint64_t mask = take == 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << take) - 1);
    const auto chunk = static_cast<std::uint64_t>(value >> done) & mask;
    words[w] = (words[w] & ~(mask << off)) | (chunk << off);
    done += take;
  }
}

}  // namespace

UWide saturating_add(UWide a, UWide b) {
  const UWide s = a + b;
  return s < a ? ~static_cast<UWide>(0) : s;
}

UWide saturating_mul(UWide a, UWide b) {
  if (a == 0 || b == 0) return 0;
  const UWide max = ~static_cast<UWide>(0);
  if (a > max / b) return max;
  return a * b;
}

UWide LutShape::size_bits() const {
  if (index_bits >= 127) return ~static_cast<UWide>(0);
  return saturating_mul(static_cast<UWide>(1) << index_bits, entry_bits());
}

std::string format_bits(UWide bits) {
  static constexpr const char* kUnits[] = {"B", "KiB", "MiB", "GiB", "TiB", "PiB", "EiB"};
  long double v = static_cast<long double>(bits) / 8.0L;
  std::size_t u = 0;
  while (v >= 1024.0L && u + 1 < std::size(kUnits)) {
    v /= 1024.0L;
    ++u;
  }
  char buf[64];
  if (u == 0)
    std::snprintf(buf, sizeof buf, "%.0Lf %s", v, kUnits[u]);
  else
    std::snprintf(buf, sizeof buf, "%.1Lf %s", v, kUnits[u]);
  return buf;
}

Lut::Lut(LutShape shape, unsigned index_cap) : shape_(std::move(shape)) {
  if (shape_.index_bits > index_cap) {
    throw CapacityError("table index width " + std::to_string(shape_.index_bits) + " bits exceeds the cap of " +
                        std::to_string(index_cap) + " bits (table would need " + format_bits(shape_.size_bits()) +
                        ")");
  }
  if (shape_.element_bits == 0 || shape_.element_bits > kMaxElementBits)
    throw CapacityError("table element width must be in [1, 127] bits");
  const UWide bits = shape_.size_bits();
  if (bits > (static_cast<UWide>(1) << 46)) throw CapacityError("table of " + format_bits(bits) + " is too large");
  words_.assign(static_cast<std::size_t>((bits + 63) / 64) + 2, 0);
}

Wide Lut::element(std::uint64_t bit_pos) const {
  const unsigned w = shape_.element_bits;
  if (w <= 57) {
    // Single unaligned 64-bit window.
    const std::uint64_t word = bit_pos >> 6;
    const unsigned off = static_cast<unsigned>(bit_pos & 63);
    std::uint64_t v = words_[word] >> off;
    if (off + w > 64) v |= words_[word + 1] << (64 - off);
    v &= (std::uint64_t{1} << w) - 1;
    if (shape_.signed_elements) {
      const std::uint64_t sign = std::uint64_t{1} << (w - 1);
      return static_cast<Wide>(static_cast<std::int64_t>(v ^ sign) - static_cast<std::int64_t>(sign));
    }
    return static_cast<Wide>(v);
  }
  const UWide v = get_bits(words_, bit_pos, w);
  if (shape_.signed_elements && ((v >> (w - 1)) & 1) != 0) {
    return static_cast<Wide>(v) - (static_cast<Wide>(1) << (w - 1)) - (static_cast<Wide>(1) << (w - 1));
  }
  return static_cast<Wide>(v);
}

void Lut::read(std::uint64_t index, std::span<Wide> out) const {
  const std::uint64_t stride = shape_.entry_bits();
  std::uint64_t pos = index * stride;
  for (auto& v : out) {
    v = element(pos);
    pos += shape_.element_bits;
  }
}

void Lut::accumulate(std::uint64_t index, std::span<Wide> acc) const {
  std::uint64_t pos = index * shape_.entry_bits();
  for (auto& v : acc) {
    v += element(pos);
    pos += shape_.element_bits;
  }
}

std::vector<Wide> Lut::lookup(std::uint64_t index) const {
  if (index >= entries())
    throw IndexError("index " + std::to_string(index) + " out of range for a " + std::to_string(shape_.index_bits) +
                     "-bit table");
  std::vector<Wide> out(shape_.entry_elements());
  read(index, out);
  return out;
}

std::uint64_t Lut::raw(std::uint64_t index, std::size_t element) const {
  const std::uint64_t pos = index * shape_.entry_bits() + element * shape_.element_bits;
  return static_cast<std::uint64_t>(get_bits(words_, pos, shape_.element_bits));
}

void Lut::write(std::uint64_t index, std::span<const Wide> values) {
  if (index >= entries()) throw IndexError("write index out of range");
  if (values.size() != shape_.entry_elements()) throw IndexError("entry has the wrong element count");
  const unsigned w = shape_.element_bits;
  const Wide lo = shape_.signed_elements ? -(static_cast<Wide>(1) << (w - 1)) : 0;
  const Wide hi = shape_.signed_elements ? (static_cast<Wide>(1) << (w - 1)) - 1
                                         : static_cast<Wide>((static_cast<UWide>(1) << w) - 1);
  std::uint64_t pos = index * shape_.entry_bits();
  for (const Wide v : values) {
    if (v < lo || v > hi) throw CapacityError("entry value does not fit " + std::to_string(w) + " bits");
    set_bits(words_, pos, w, static_cast<UWide>(v));
    pos += w;
  }
}

void Lut::save_image(std::ostream& os) const {
  detail::Writer w(os);
  w.bytes(kLutMagic, 4);
  w.put<std::uint32_t>(shape_.index_bits);
  w.put<std::uint32_t>(shape_.element_bits);
  w.put<std::uint8_t>(shape_.signed_elements ? 1 : 0);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(shape_.entry_shape.size()));
  for (const auto d : shape_.entry_shape) w.put<std::uint64_t>(d);
  const std::uint64_t payload_bytes = static_cast<std::uint64_t>((shape_.size_bits() + 7) / 8);
  w.put<std::uint64_t>(payload_bytes);
  for (std::uint64_t i = 0; i < payload_bytes; ++i) {
    const auto byte = static_cast<std::uint8_t>(words_[i / 8] >> (8 * (i % 8)));
    w.put<std::uint8_t>(byte);
  }
}

Lut Lut::load_image(std::istream& is) {
  detail::Reader r(is);
  char magic[4];
  r.bytes(magic, 4, "LUT magic");
  if (std::string(magic, 4) != std::string(kLutMagic, 4)) throw ParseError("bad LUT magic", 0);
  LutShape shape;
  shape.index_bits = r.get<std::uint32_t>("index_bits");
  shape.element_bits = r.get<std::uint32_t>("element_bits");
  shape.signed_elements = r.get<std::uint8_t>("signed flag") != 0;
  const auto rank = r.get<std::uint32_t>("entry rank");
  if (rank > 8) throw ParseError("implausible entry rank", r.offset());
  for (std::uint32_t i = 0; i < rank; ++i) shape.entry_shape.push_back(r.get<std::uint64_t>("entry dim"));
  const std::size_t at = r.offset();
  Lut lut;
  try {
    lut = Lut(shape, 64);
  } catch (const CapacityError& e) {
    throw ParseError(std::string("bad LUT header: ") + e.what(), at);
  }
  const auto payload_bytes = r.get<std::uint64_t>("payload length");
  if (payload_bytes != static_cast<std::uint64_t>((shape.size_bits() + 7) / 8))
    throw ParseError("LUT payload length does not match its header", r.offset());
  std::vector<std::uint8_t> buf(payload_bytes);
  r.bytes(buf.data(), buf.size(), "LUT payload");
  for (std::uint64_t i = 0; i < payload_bytes; ++i) lut.words_[i / 8] |= std::uint64_t{buf[i]} << (8 * (i % 8));
  return lut;
}

Lut tabulate_exact(const std::function<void(std::uint64_t, std::span<Wide>)>& fn, unsigned index_bits,
                   std::vector<std::size_t> entry_shape, unsigned element_bits, unsigned index_cap) {
  Lut lut(LutShape{index_bits, element_bits, std::move(entry_shape), true}, index_cap);
  std::vector<Wide> entry(lut.shape().entry_elements());
  for (std::uint64_t i = 0; i < lut.entries(); ++i) {
    fn(i, entry);
    lut.write(i, entry);
  }
  return lut;
}

Lut tabulate(const std::function<std::vector<double>(std::uint64_t)>& fn, unsigned index_bits,
             std::vector<std::size_t> entry_shape, const Format& out, unsigned index_cap) {
  Lut lut(LutShape{index_bits, width(out), std::move(entry_shape), false}, index_cap);
  std::vector<Wide> entry(lut.shape().entry_elements());
  for (std::uint64_t i = 0; i < lut.entries(); ++i) {
    const std::vector<double> values = fn(i);
    if (values.size() != entry.size()) throw DomainError("tabulated function returned the wrong entry size");
    for (std::size_t e = 0; e < entry.size(); ++e) entry[e] = quantize(values[e], out);
    lut.write(i, entry);
  }
  return lut;
}

const Lut& LutBank::resolve(std::uint32_t logical_id) const {
  if (logical_id >= logical.size()) throw IndexError("unknown logical table id " + std::to_string(logical_id));
  if (!materialized()) throw RunError("table bank is cost-only and holds no entries");
  return tables[logical[logical_id]];
}

UWide LutBank::size_bits() const {
  UWide total = 0;
  for (const auto& s : shapes) total = saturating_add(total, s.size_bits());
  return total;
}

}  // namespace lutnet
