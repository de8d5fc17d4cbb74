#include "gansr/geotiff.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace gansr {

namespace {

// TIFF tag ids used by this codec
constexpr std::uint16_t kTagWidth = 256;
constexpr std::uint16_t kTagHeight = 257;
constexpr std::uint16_t kTagBitsPerSample = 258;
constexpr std::uint16_t kTagCompression = 259;
constexpr std::uint16_t kTagPhotometric = 262;
constexpr std::uint16_t kTagStripOffsets = 273;
constexpr std::uint16_t kTagSamplesPerPixel = 277;
constexpr std::uint16_t kTagRowsPerStrip = 278;
constexpr std::uint16_t kTagStripByteCounts = 279;
constexpr std::uint16_t kTagPlanarConfig = 284;
constexpr std::uint16_t kTagExtraSamples = 338;
constexpr std::uint16_t kTagSampleFormat = 339;
constexpr std::uint16_t kTagModelPixelScale = 33550;
constexpr std::uint16_t kTagModelTiepoint = 33922;
constexpr std::uint16_t kTagGeoKeyDirectory = 34735;
constexpr std::uint16_t kTagGeoDoubleParams = 34736;
constexpr std::uint16_t kTagGeoAsciiParams = 34737;

// TIFF field types
constexpr std::uint16_t kTypeByte = 1;
constexpr std::uint16_t kTypeAscii = 2;
constexpr std::uint16_t kTypeShort = 3;
constexpr std::uint16_t kTypeLong = 4;
constexpr std::uint16_t kTypeDouble = 12;

std::size_t type_size(std::uint16_t type) {
  switch (type) {
    case kTypeByte:
    case kTypeAscii:
      return 1;
    case kTypeShort:
      return 2;
    case kTypeLong:
      return 4;
    case kTypeDouble:
      return 8;
    default:
      return 0;
  }
}

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error("geotiff: " + path + ": " + what);
}

// ------------------------------------------------------------------ reader

struct RawEntry {
  std::uint16_t type = 0;
  std::uint32_t count = 0;
  std::array<unsigned char, 4> inline_value{};
  std::uint32_t offset = 0;  // interpretation of inline_value as u32
};

class Reader {
 public:
  explicit Reader(const std::string& path) : path_(path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path_, "cannot open file");
    in.seekg(0, std::ios::end);
    bytes_.resize(static_cast<std::size_t>(in.tellg()));
    in.seekg(0);
    in.read(reinterpret_cast<char*>(bytes_.data()),
            static_cast<std::streamsize>(bytes_.size()));
    if (!in) fail(path_, "short read");
    if (bytes_.size() < 8) fail(path_, "not a TIFF (file too small)");
    if (bytes_[0] == 'M' && bytes_[1] == 'M') {
      fail(path_, "big-endian TIFF is not supported by this reader");
    }
    if (bytes_[0] != 'I' || bytes_[1] != 'I' || u16(2) != 42) {
      fail(path_, "not a little-endian TIFF");
    }
    parse_ifd(u32(4));
  }

  GeoTiffImage decode() {
    const auto width = scalar(kTagWidth, "ImageWidth");
    const auto height = scalar(kTagHeight, "ImageLength");
    const auto spp = entries_.count(kTagSamplesPerPixel)
                         ? scalar(kTagSamplesPerPixel, "SamplesPerPixel")
                         : 1;
    const auto compression = entries_.count(kTagCompression)
                                 ? scalar(kTagCompression, "Compression")
                                 : 1;
    const auto planar = entries_.count(kTagPlanarConfig)
                            ? scalar(kTagPlanarConfig, "PlanarConfiguration")
                            : 1;
    if (planar != 1) fail(path_, "planar (band-sequential) layout unsupported");
    if (compression != 1 && compression != 8) {
      fail(path_, "compression " + std::to_string(compression) +
                      " unsupported (only none/deflate)");
    }
    auto bits = int_array(kTagBitsPerSample);
    if (bits.empty()) bits.assign(static_cast<std::size_t>(spp), 1);
    auto formats = int_array(kTagSampleFormat);
    if (formats.empty()) formats.assign(static_cast<std::size_t>(spp), 1);
    for (auto b : bits) {
      if (b != bits[0]) fail(path_, "mixed bits-per-sample unsupported");
    }
    for (auto f : formats) {
      if (f != formats[0]) fail(path_, "mixed sample formats unsupported");
    }
    PixelType pixel_type;
    if (bits[0] == 16 && formats[0] == 1) {
      pixel_type = PixelType::kUint16;
    } else if (bits[0] == 32 && formats[0] == 3) {
      pixel_type = PixelType::kFloat32;
    } else {
      fail(path_, "unsupported pixel type (bits=" + std::to_string(bits[0]) +
                      ", format=" + std::to_string(formats[0]) +
                      "); expected uint16 or float32");
    }
    const std::size_t bytes_per_sample = bits[0] / 8;

    const auto rows_per_strip = entries_.count(kTagRowsPerStrip)
                                    ? scalar(kTagRowsPerStrip, "RowsPerStrip")
                                    : height;
    auto offsets = int_array(kTagStripOffsets);
    auto counts = int_array(kTagStripByteCounts);
    if (offsets.empty()) fail(path_, "missing StripOffsets");
    if (counts.size() != offsets.size()) {
      fail(path_, "StripByteCounts/StripOffsets length mismatch");
    }

    GeoTiffImage img;
    img.pixel_type = pixel_type;
    img.data = torch::empty({static_cast<std::int64_t>(spp),
                             static_cast<std::int64_t>(height),
                             static_cast<std::int64_t>(width)},
                            torch::kFloat32);
    auto acc = img.data.accessor<float, 3>();

    const std::size_t row_bytes =
        static_cast<std::size_t>(width) * spp * bytes_per_sample;
    std::vector<unsigned char> strip;
    std::uint64_t row = 0;
    for (std::size_t s = 0; s < offsets.size() && row < height; ++s) {
      const std::uint64_t rows_here =
          std::min<std::uint64_t>(rows_per_strip, height - row);
      const std::size_t want = row_bytes * rows_here;
      if (offsets[s] + counts[s] > bytes_.size()) {
        fail(path_, "strip " + std::to_string(s) + " runs past end of file");
      }
      const unsigned char* src = bytes_.data() + offsets[s];
      if (compression == 8) {
        strip.resize(want);
        uLongf dest_len = want;
        const int rc = uncompress(strip.data(), &dest_len, src,
                                  static_cast<uLong>(counts[s]));
        if (rc != Z_OK || dest_len != want) {
          fail(path_, "deflate strip " + std::to_string(s) + " corrupt");
        }
        src = strip.data();
      } else if (counts[s] < want) {
        fail(path_, "strip " + std::to_string(s) + " truncated");
      }
      for (std::uint64_t r = 0; r < rows_here; ++r) {
        const unsigned char* p = src + r * row_bytes;
        const auto y = static_cast<std::int64_t>(row + r);
        for (std::uint64_t x = 0; x < width; ++x) {
          for (std::uint64_t c = 0; c < spp; ++c) {
            float v;
            if (pixel_type == PixelType::kUint16) {
              std::uint16_t raw;
              std::memcpy(&raw, p, 2);
              v = static_cast<float>(raw);
              p += 2;
            } else {
              std::memcpy(&v, p, 4);
              p += 4;
            }
            acc[static_cast<std::int64_t>(c)][y][static_cast<std::int64_t>(x)] =
                v;
          }
        }
      }
      row += rows_here;
    }
    if (row != height) fail(path_, "strips cover fewer rows than ImageLength");

    decode_geo(img.geo);
    return img;
  }

 private:
  void parse_ifd(std::uint32_t ifd_offset) {
    if (ifd_offset + 2 > bytes_.size()) fail(path_, "IFD offset out of range");
    const auto n = u16(ifd_offset);
    std::size_t pos = ifd_offset + 2;
    for (std::uint16_t i = 0; i < n; ++i, pos += 12) {
      if (pos + 12 > bytes_.size()) fail(path_, "IFD entry out of range");
      RawEntry e;
      const auto tag = u16(pos);
      e.type = u16(pos + 2);
      e.count = u32(pos + 4);
      std::memcpy(e.inline_value.data(), bytes_.data() + pos + 8, 4);
      e.offset = u32(pos + 8);
      entries_[tag] = e;
    }
  }

  std::uint16_t u16(std::size_t at) const {
    std::uint16_t v;
    std::memcpy(&v, bytes_.data() + at, 2);
    return v;
  }
  std::uint32_t u32(std::size_t at) const {
    std::uint32_t v;
    std::memcpy(&v, bytes_.data() + at, 4);
    return v;
  }

  const unsigned char* payload(const RawEntry& e) const {
    const std::size_t total = type_size(e.type) * e.count;
    if (total <= 4) return e.inline_value.data();
    if (e.offset + total > bytes_.size()) {
      fail(path_, "tag payload out of range");
    }
    return bytes_.data() + e.offset;
  }

  std::uint64_t scalar(std::uint16_t tag, const char* name) {
    auto v = int_array(tag);
    if (v.empty()) fail(path_, std::string("missing required tag ") + name);
    return v[0];
  }

  std::vector<std::uint64_t> int_array(std::uint16_t tag) {
    auto it = entries_.find(tag);
    if (it == entries_.end()) return {};
    const RawEntry& e = it->second;
    const unsigned char* p = payload(e);
    std::vector<std::uint64_t> out(e.count);
    for (std::uint32_t i = 0; i < e.count; ++i) {
      if (e.type == kTypeShort) {
        std::uint16_t v;
        std::memcpy(&v, p + 2 * i, 2);
        out[i] = v;
      } else if (e.type == kTypeLong) {
        std::uint32_t v;
        std::memcpy(&v, p + 4 * i, 4);
        out[i] = v;
      } else if (e.type == kTypeByte) {
        out[i] = p[i];
      } else {
        fail(path_, "tag " + std::to_string(tag) + " has unexpected type");
      }
    }
    return out;
  }

  std::vector<double> double_array(std::uint16_t tag) {
    auto it = entries_.find(tag);
    if (it == entries_.end()) return {};
    const RawEntry& e = it->second;
    if (e.type != kTypeDouble) fail(path_, "expected DOUBLE tag");
    const unsigned char* p = payload(e);
    std::vector<double> out(e.count);
    std::memcpy(out.data(), p, 8 * e.count);
    return out;
  }

  void decode_geo(GeoMeta& geo) {
    auto scale = double_array(kTagModelPixelScale);
    if (scale.size() >= 3) {
      geo.has_pixel_scale = true;
      std::copy_n(scale.begin(), 3, geo.pixel_scale.begin());
    }
    auto tie = double_array(kTagModelTiepoint);
    if (tie.size() >= 6) {
      geo.has_tiepoint = true;
      std::copy_n(tie.begin(), 6, geo.tiepoint.begin());
    }
    auto keys = int_array(kTagGeoKeyDirectory);
    geo.geo_key_directory.assign(keys.begin(), keys.end());
    geo.geo_double_params = double_array(kTagGeoDoubleParams);
    auto it = entries_.find(kTagGeoAsciiParams);
    if (it != entries_.end() && it->second.type == kTypeAscii) {
      const unsigned char* p = payload(it->second);
      geo.geo_ascii_params.assign(reinterpret_cast<const char*>(p),
                                  it->second.count);
      // the on-disk value is NUL-terminated; present the logical string
      while (!geo.geo_ascii_params.empty() && geo.geo_ascii_params.back() == '\0')
        geo.geo_ascii_params.pop_back();
    }
  }

  std::string path_;
  std::vector<unsigned char> bytes_;
  std::map<std::uint16_t, RawEntry> entries_;
};

// ------------------------------------------------------------------ writer

struct Entry {
  std::uint16_t tag;
  std::uint16_t type;
  std::uint32_t count;
  std::uint32_t value;          // inline value or external offset
  std::vector<unsigned char> external;  // payload when > 4 bytes
};

void put16(std::vector<unsigned char>& v, std::uint16_t x) {
  v.push_back(static_cast<unsigned char>(x & 0xff));
  v.push_back(static_cast<unsigned char>(x >> 8));
}
void put32(std::vector<unsigned char>& v, std::uint32_t x) {
  for (int i = 0; i < 4; ++i) {
    v.push_back(static_cast<unsigned char>((x >> (8 * i)) & 0xff));
  }
}

Entry short_entry(std::uint16_t tag, const std::vector<std::uint16_t>& vals) {
  Entry e{tag, kTypeShort, static_cast<std::uint32_t>(vals.size()), 0, {}};
  if (vals.size() <= 2) {
    std::uint32_t packed = 0;
    for (std::size_t i = 0; i < vals.size(); ++i) {
      packed |= static_cast<std::uint32_t>(vals[i]) << (16 * i);
    }
    e.value = packed;
  } else {
    for (auto v : vals) put16(e.external, v);
  }
  return e;
}

Entry long_entry(std::uint16_t tag, const std::vector<std::uint32_t>& vals) {
  Entry e{tag, kTypeLong, static_cast<std::uint32_t>(vals.size()), 0, {}};
  if (vals.size() == 1) {
    e.value = vals[0];
  } else {
    for (auto v : vals) put32(e.external, v);
  }
  return e;
}

Entry double_entry(std::uint16_t tag, const std::vector<double>& vals) {
  Entry e{tag, kTypeDouble, static_cast<std::uint32_t>(vals.size()), 0, {}};
  e.external.resize(8 * vals.size());
  std::memcpy(e.external.data(), vals.data(), e.external.size());
  return e;
}

Entry ascii_entry(std::uint16_t tag, const std::string& s) {
  std::string z = s;
  if (z.empty() || z.back() != '\0') z.push_back('\0');
  Entry e{tag, kTypeAscii, static_cast<std::uint32_t>(z.size()), 0, {}};
  if (z.size() <= 4) {
    std::uint32_t packed = 0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      packed |= static_cast<std::uint32_t>(static_cast<unsigned char>(z[i]))
                << (8 * i);
    }
    e.value = packed;
  } else {
    e.external.assign(z.begin(), z.end());
  }
  return e;
}

}  // namespace

struct GeoTiffRowWriter::Impl {
  std::string path;
  std::ofstream out;
  std::int64_t bands, h, w;
  PixelType pixel_type;
  GeoMeta geo;
  bool deflate;
  std::int64_t rows_written = 0;
  std::uint64_t cursor = 8;  // byte offset past header
  std::vector<std::uint32_t> strip_offsets, strip_counts;
  bool finished = false;
};

GeoTiffRowWriter::GeoTiffRowWriter(const std::string& path, std::int64_t bands,
                                   std::int64_t h, std::int64_t w,
                                   PixelType pixel_type, const GeoMeta& geo,
                                   bool deflate)
    : impl_(std::make_unique<Impl>()) {
  if (bands < 1 || h < 1 || w < 1) {
    fail(path, "invalid output dimensions");
  }
  impl_->path = path;
  impl_->bands = bands;
  impl_->h = h;
  impl_->w = w;
  impl_->pixel_type = pixel_type;
  impl_->geo = geo;
  impl_->deflate = deflate;
  impl_->out.open(path, std::ios::binary | std::ios::trunc);
  if (!impl_->out) fail(path, "cannot open for writing");
  // header: byte order, magic, IFD offset (patched by finish())
  const unsigned char header[8] = {'I', 'I', 42, 0, 0, 0, 0, 0};
  impl_->out.write(reinterpret_cast<const char*>(header), 8);
  impl_->strip_offsets.reserve(static_cast<std::size_t>(h));
  impl_->strip_counts.reserve(static_cast<std::size_t>(h));
}

GeoTiffRowWriter::~GeoTiffRowWriter() = default;

void GeoTiffRowWriter::write_rows(const torch::Tensor& rows) {
  auto& s = *impl_;
  if (s.finished) fail(s.path, "write_rows after finish");
  if (rows.dim() != 3 || rows.size(0) != s.bands || rows.size(2) != s.w) {
    fail(s.path, "write_rows expects (bands, n, width) matching the header");
  }
  const auto n = rows.size(1);
  if (s.rows_written + n > s.h) fail(s.path, "more rows than ImageLength");
  auto chunk = rows.to(torch::kFloat32).contiguous();
  auto acc = chunk.accessor<float, 3>();

  const std::size_t row_samples = static_cast<std::size_t>(s.w) * s.bands;
  const std::size_t sample_bytes = s.pixel_type == PixelType::kUint16 ? 2 : 4;
  std::vector<unsigned char> row_buf(row_samples * sample_bytes);
  std::vector<unsigned char> z_buf;

  for (std::int64_t r = 0; r < n; ++r) {
    unsigned char* p = row_buf.data();
    for (std::int64_t x = 0; x < s.w; ++x) {
      for (std::int64_t c = 0; c < s.bands; ++c) {
        const float v = acc[c][r][x];
        if (s.pixel_type == PixelType::kUint16) {
          const float clamped = std::min(std::max(v, 0.0f), 65535.0f);
          const auto q = static_cast<std::uint16_t>(std::lround(clamped));
          std::memcpy(p, &q, 2);
          p += 2;
        } else {
          std::memcpy(p, &v, 4);
          p += 4;
        }
      }
    }
    const unsigned char* payload = row_buf.data();
    std::size_t nbytes = row_buf.size();
    if (s.deflate) {
      uLongf bound = compressBound(static_cast<uLong>(row_buf.size()));
      z_buf.resize(bound);
      const int rc = compress2(z_buf.data(), &bound, row_buf.data(),
                               static_cast<uLong>(row_buf.size()), 6);
      if (rc != Z_OK) fail(s.path, "deflate failed");
      payload = z_buf.data();
      nbytes = bound;
    }
    s.strip_offsets.push_back(static_cast<std::uint32_t>(s.cursor));
    s.strip_counts.push_back(static_cast<std::uint32_t>(nbytes));
    s.out.write(reinterpret_cast<const char*>(payload),
                static_cast<std::streamsize>(nbytes));
    s.cursor += nbytes;
  }
  s.rows_written += n;
  if (!s.out) fail(s.path, "write failed (disk full?)");
}

void GeoTiffRowWriter::finish() {
  auto& s = *impl_;
  if (s.finished) return;
  if (s.rows_written != s.h) {
    fail(s.path, "finish called after " + std::to_string(s.rows_written) +
                     " of " + std::to_string(s.h) + " rows");
  }
  const auto bands16 = static_cast<std::uint16_t>(s.bands);
  const std::uint16_t bits = s.pixel_type == PixelType::kUint16 ? 16 : 32;
  const std::uint16_t fmt = s.pixel_type == PixelType::kUint16 ? 1 : 3;

  std::vector<Entry> entries;
  entries.push_back(long_entry(kTagWidth, {static_cast<std::uint32_t>(s.w)}));
  entries.push_back(long_entry(kTagHeight, {static_cast<std::uint32_t>(s.h)}));
  entries.push_back(short_entry(
      kTagBitsPerSample, std::vector<std::uint16_t>(bands16, bits)));
  entries.push_back(short_entry(kTagCompression,
                                {static_cast<std::uint16_t>(s.deflate ? 8 : 1)}));
  entries.push_back(short_entry(kTagPhotometric, {1}));  // min-is-black
  entries.push_back(long_entry(kTagStripOffsets, s.strip_offsets));
  entries.push_back(short_entry(kTagSamplesPerPixel, {bands16}));
  entries.push_back(long_entry(kTagRowsPerStrip, {1}));
  entries.push_back(long_entry(kTagStripByteCounts, s.strip_counts));
  entries.push_back(short_entry(kTagPlanarConfig, {1}));
  if (bands16 > 1) {
    entries.push_back(short_entry(
        kTagExtraSamples, std::vector<std::uint16_t>(bands16 - 1, 0)));
  }
  entries.push_back(
      short_entry(kTagSampleFormat, std::vector<std::uint16_t>(bands16, fmt)));
  if (s.geo.has_pixel_scale) {
    entries.push_back(double_entry(
        kTagModelPixelScale,
        {s.geo.pixel_scale[0], s.geo.pixel_scale[1], s.geo.pixel_scale[2]}));
  }
  if (s.geo.has_tiepoint) {
    entries.push_back(double_entry(
        kTagModelTiepoint,
        std::vector<double>(s.geo.tiepoint.begin(), s.geo.tiepoint.end())));
  }
  if (!s.geo.geo_key_directory.empty()) {
    entries.push_back(short_entry(kTagGeoKeyDirectory, s.geo.geo_key_directory));
  }
  if (!s.geo.geo_double_params.empty()) {
    entries.push_back(double_entry(kTagGeoDoubleParams, s.geo.geo_double_params));
  }
  if (!s.geo.geo_ascii_params.empty()) {
    entries.push_back(ascii_entry(kTagGeoAsciiParams, s.geo.geo_ascii_params));
  }
  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.tag < b.tag; });

  // lay external payloads after the image data, then the IFD itself
  std::uint64_t pos = s.cursor;
  for (auto& e : entries) {
    if (!e.external.empty()) {
      if (pos % 2 == 1) ++pos;  // word-align payloads
      e.value = static_cast<std::uint32_t>(pos);
      pos += e.external.size();
    }
  }
  if (pos % 2 == 1) ++pos;
  const std::uint64_t ifd_offset = pos;

  // write payloads (with alignment padding)
  std::uint64_t at = s.cursor;
  for (const auto& e : entries) {
    if (e.external.empty()) continue;
    if (at % 2 == 1) {
      s.out.put('\0');
      ++at;
    }
    s.out.write(reinterpret_cast<const char*>(e.external.data()),
                static_cast<std::streamsize>(e.external.size()));
    at += e.external.size();
  }
  if (at % 2 == 1) {
    s.out.put('\0');
    ++at;
  }

  // the IFD
  std::vector<unsigned char> ifd;
  put16(ifd, static_cast<std::uint16_t>(entries.size()));
  for (const auto& e : entries) {
    put16(ifd, e.tag);
    put16(ifd, e.type);
    put32(ifd, e.count);
    put32(ifd, e.value);
  }
  put32(ifd, 0);  // no next IFD
  s.out.write(reinterpret_cast<const char*>(ifd.data()),
              static_cast<std::streamsize>(ifd.size()));

  // patch the header's IFD pointer
  s.out.seekp(4);
  std::uint32_t ifd32 = static_cast<std::uint32_t>(ifd_offset);
  s.out.write(reinterpret_cast<const char*>(&ifd32), 4);
  s.out.flush();
  if (!s.out) fail(s.path, "finalizing directory failed");
  s.out.close();
  s.finished = true;
}

GeoTiffImage read_geotiff(const std::string& path) {
  Reader r(path);
  return r.decode();
}

void write_geotiff(const std::string& path, const GeoTiffImage& img,
                   bool deflate) {
  if (img.data.dim() != 3) {
    fail(path, "image tensor must be (bands, h, w)");
  }
  GeoTiffRowWriter w(path, img.data.size(0), img.data.size(1), img.data.size(2),
                     img.pixel_type, img.geo, deflate);
  w.write_rows(img.data);
  w.finish();
}

}  // namespace gansr
