#ifndef GANSR_GEOTIFF_HPP
#define GANSR_GEOTIFF_HPP

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace gansr {

enum class PixelType { kUint16, kFloat32 };

// Georeferencing sidecar carried through read -> process -> write untouched
// (except for the pixel scale, which inference divides by the SR factor).
struct GeoMeta {
  bool has_pixel_scale = false;
  std::array<double, 3> pixel_scale{};  // x, y, z
  bool has_tiepoint = false;
  std::array<double, 6> tiepoint{};  // i, j, k, x, y, z
  std::vector<std::uint16_t> geo_key_directory;
  std::vector<double> geo_double_params;
  std::string geo_ascii_params;
};

struct GeoTiffImage {
  torch::Tensor data;  // (bands, h, w) float32, raw pixel values
  PixelType pixel_type = PixelType::kUint16;
  GeoMeta geo;
};

// Minimal baseline-TIFF reader: little-endian, stripped, band-interleaved
// (PlanarConfiguration, 1), uint16 or float32 samples, compression none or
// deflate. Unsupported layouts raise std::runtime_error naming the file and
// the offending feature.
GeoTiffImage read_geotiff(const std::string& path);

// Streamed writer: rows are appended top to bottom (one strip per row) and
// the directory is emitted by finish(). Bounded memory: only the currently
// fed rows are ever held.
class GeoTiffRowWriter {
 public:
  GeoTiffRowWriter(const std::string& path, std::int64_t bands, std::int64_t h,
                   std::int64_t w, PixelType pixel_type, const GeoMeta& geo,
                   bool deflate = false);
  ~GeoTiffRowWriter();

  GeoTiffRowWriter(const GeoTiffRowWriter&) = delete;
  GeoTiffRowWriter& operator=(const GeoTiffRowWriter&) = delete;

  // rows: (bands, n, w) float32. uint16 outputs are rounded and clamped to
  // [0, 65535].
  void write_rows(const torch::Tensor& rows);
  void finish();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Whole-image convenience wrapper around GeoTiffRowWriter.
void write_geotiff(const std::string& path, const GeoTiffImage& img,
                   bool deflate = false);

}  // namespace gansr

#endif  // GANSR_GEOTIFF_HPP
