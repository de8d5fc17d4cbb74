#include <doctest.h>
#include <torch/torch.h>

#include <fstream>
#include <string>

#include "gansr/geotiff.hpp"
#include "support/helpers.hpp"

using namespace gansr;
using gansr::testsupport::TempDir;

namespace {

GeoMeta sample_geo() {
  GeoMeta g;
  g.has_pixel_scale = true;
  g.pixel_scale = {10.0, 10.0, 0.0};
  g.has_tiepoint = true;
  g.tiepoint = {0.0, 0.0, 0.0, 600000.0, 5000000.0, 0.0};
  // Minimal GeoKeyDirectory: version 1.1.0, one key (GTModelTypeGeoKey = 1).
  g.geo_key_directory = {1, 1, 0, 1, 1024, 0, 1, 1};
  g.geo_double_params = {0.5, -2.25};
  g.geo_ascii_params = "WGS 84 / UTM zone 32N|";
  return g;
}

torch::Tensor quantized_uint16(std::int64_t bands, std::int64_t h,
                               std::int64_t w, std::uint64_t seed) {
  torch::manual_seed(seed);
  auto t = torch::randint(0, 65536, {bands, h, w}, torch::kInt64);
  return t.to(torch::kFloat32);
}

}  // namespace

TEST_SUITE("geotiff") {

TEST_CASE("uint16 round trip preserves pixels and geo tags") {
  TempDir tmp("gt-u16");
  const auto path = (tmp.path() / "scene.tif").string();

  GeoTiffImage img;
  img.data = quantized_uint16(4, 33, 47, 7);
  img.pixel_type = PixelType::kUint16;
  img.geo = sample_geo();
  write_geotiff(path, img);

  auto back = read_geotiff(path);
  CHECK(back.pixel_type == PixelType::kUint16);
  CHECK(back.data.sizes() == img.data.sizes());
  CHECK(back.data.equal(img.data));
  CHECK(back.geo.has_pixel_scale);
  CHECK(back.geo.pixel_scale == img.geo.pixel_scale);
  CHECK(back.geo.has_tiepoint);
  CHECK(back.geo.tiepoint == img.geo.tiepoint);
  CHECK(back.geo.geo_key_directory == img.geo.geo_key_directory);
  CHECK(back.geo.geo_double_params == img.geo.geo_double_params);
  CHECK(back.geo.geo_ascii_params == img.geo.geo_ascii_params);
}

TEST_CASE("float32 round trip is bit exact") {
  TempDir tmp("gt-f32");
  const auto path = (tmp.path() / "scene.tif").string();

  torch::manual_seed(11);
  GeoTiffImage img;
  img.data = torch::randn({3, 21, 18}) * 1000.0f;
  img.pixel_type = PixelType::kFloat32;
  img.geo = sample_geo();
  write_geotiff(path, img);

  auto back = read_geotiff(path);
  CHECK(back.pixel_type == PixelType::kFloat32);
  CHECK(back.data.equal(img.data));
}

TEST_CASE("deflate round trips and shrinks compressible data") {
  TempDir tmp("gt-z");
  const auto plain = (tmp.path() / "plain.tif").string();
  const auto packed = (tmp.path() / "packed.tif").string();

  GeoTiffImage img;
  // Highly compressible: constant bands.
  img.data = torch::full({4, 64, 64}, 1234.0f);
  img.pixel_type = PixelType::kUint16;
  img.geo = sample_geo();
  write_geotiff(plain, img, /*deflate=*/false);
  write_geotiff(packed, img, /*deflate=*/true);

  auto a = read_geotiff(plain);
  auto b = read_geotiff(packed);
  CHECK(a.data.equal(img.data));
  CHECK(b.data.equal(img.data));
  CHECK(std::filesystem::file_size(packed) <
        std::filesystem::file_size(plain) / 4);
}

TEST_CASE("single band, no geo tags") {
  TempDir tmp("gt-1b");
  const auto path = (tmp.path() / "gray.tif").string();

  GeoTiffImage img;
  img.data = quantized_uint16(1, 9, 13, 3);
  img.pixel_type = PixelType::kUint16;
  write_geotiff(path, img);

  auto back = read_geotiff(path);
  CHECK(back.data.equal(img.data));
  CHECK_FALSE(back.geo.has_pixel_scale);
  CHECK_FALSE(back.geo.has_tiepoint);
  CHECK(back.geo.geo_key_directory.empty());
}

TEST_CASE("row writer output matches the whole-image writer byte for byte") {
  TempDir tmp("gt-rows");
  const auto whole = (tmp.path() / "whole.tif").string();
  const auto rowed = (tmp.path() / "rowed.tif").string();

  GeoTiffImage img;
  img.data = quantized_uint16(3, 40, 27, 99);
  img.pixel_type = PixelType::kUint16;
  img.geo = sample_geo();
  write_geotiff(whole, img);

  GeoTiffRowWriter w(rowed, 3, 40, 27, PixelType::kUint16, img.geo);
  // uneven chunks, including a single row
  std::int64_t row = 0;
  for (std::int64_t chunk : {7, 1, 12, 20}) {
    w.write_rows(img.data.narrow(1, row, chunk));
    row += chunk;
  }
  CHECK(row == 40);
  w.finish();

  CHECK(gansr::testsupport::files_identical(whole, rowed));
}

TEST_CASE("uint16 conversion rounds and clamps") {
  TempDir tmp("gt-clamp");
  const auto path = (tmp.path() / "c.tif").string();

  GeoTiffImage img;
  img.data = torch::tensor({{{-5.0f, 0.49f, 0.51f},
                             {65535.4f, 70000.0f, 12.5f}}})
                 .reshape({1, 2, 3});
  img.pixel_type = PixelType::kUint16;
  write_geotiff(path, img);

  auto back = read_geotiff(path);
  auto expect = torch::tensor({{{0.0f, 0.0f, 1.0f},
                                {65535.0f, 65535.0f, 13.0f}}})
                    .reshape({1, 2, 3});
  CHECK(back.data.equal(expect));
}

TEST_CASE("row writer rejects bad feeds") {
  TempDir tmp("gt-feed");
  const auto path = (tmp.path() / "bad.tif").string();
  GeoTiffRowWriter w(path, 2, 10, 8, PixelType::kUint16, GeoMeta{});

  SUBCASE("wrong width") {
    CHECK_THROWS_AS(w.write_rows(torch::zeros({2, 3, 9})),
                    std::runtime_error);
  }
  SUBCASE("wrong band count") {
    CHECK_THROWS_AS(w.write_rows(torch::zeros({3, 3, 8})),
                    std::runtime_error);
  }
  SUBCASE("feeding past the declared height") {
    w.write_rows(torch::zeros({2, 8, 8}));
    CHECK_THROWS_WITH_AS(w.write_rows(torch::zeros({2, 3, 8})),
                         doctest::Contains("more rows"), std::runtime_error);
  }
  SUBCASE("finish before all rows are fed") {
    w.write_rows(torch::zeros({2, 4, 8}));
    CHECK_THROWS_AS(w.finish(), std::runtime_error);
  }
  // destructor must tolerate an unfinished writer without throwing
}

TEST_CASE("reader error paths name the file") {
  TempDir tmp("gt-err");

  SUBCASE("missing file") {
    const auto path = (tmp.path() / "nope.tif").string();
    CHECK_THROWS_WITH_AS(read_geotiff(path),
                         doctest::Contains("nope.tif"), std::runtime_error);
  }
  SUBCASE("not a tiff") {
    const auto path = (tmp.path() / "junk.tif").string();
    std::ofstream(path) << "this is not a tiff at all, not even close";
    CHECK_THROWS_WITH_AS(read_geotiff(path),
                         doctest::Contains("junk.tif"), std::runtime_error);
  }
  SUBCASE("big endian rejected with a clear message") {
    const auto path = (tmp.path() / "be.tif").string();
    std::ofstream out(path, std::ios::binary);
    const unsigned char hdr[8] = {'M', 'M', 0x00, 0x2A, 0, 0, 0, 8};
    out.write(reinterpret_cast<const char*>(hdr), 8);
    out.close();
    CHECK_THROWS_WITH_AS(read_geotiff(path),
                         doctest::Contains("big-endian"), std::runtime_error);
  }
  SUBCASE("truncated payload") {
    // Write a valid file then chop its strip data.
    const auto good = (tmp.path() / "good.tif").string();
    GeoTiffImage img;
    img.data = quantized_uint16(2, 16, 16, 5);
    img.pixel_type = PixelType::kUint16;
    write_geotiff(good, img);
    const auto bad = (tmp.path() / "trunc.tif").string();
    {
      std::ifstream in(good, std::ios::binary);
      std::string bytes((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
      std::ofstream out(bad, std::ios::binary);
      out.write(bytes.data(),
                static_cast<std::streamsize>(bytes.size() / 2));
    }
    CHECK_THROWS_AS(read_geotiff(bad), std::runtime_error);
  }
}

TEST_CASE("multi-strip files from the row writer read back correctly") {
  // Regression guard: each row is its own strip, so the reader must walk
  // strip offsets/counts rather than assume one contiguous block.
  TempDir tmp("gt-strips");
  const auto path = (tmp.path() / "strips.tif").string();

  torch::manual_seed(17);
  auto data = torch::rand({2, 12, 10}) * 3.0f - 1.0f;
  GeoTiffRowWriter w(path, 2, 12, 10, PixelType::kFloat32, GeoMeta{},
                     /*deflate=*/true);
  w.write_rows(data);
  w.finish();

  auto back = read_geotiff(path);
  CHECK(back.pixel_type == PixelType::kFloat32);
  CHECK(back.data.equal(data));
}

}  // TEST_SUITE
