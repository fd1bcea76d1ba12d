#pragma once

// "FLM1" binary container, little-endian throughout:
//
//   0   magic "FLM1"
//   4   u32 version (1)
//   8   u32 task    (0 scalar, 1 line, 2 image, 3 matrix dump)
//   12  u32 Q       (rows for a matrix dump)
//   16  u32 nx      (cols for a matrix dump)
//   20  u32 ny      (1 for a matrix dump)
//   24  u32 out_n   (0 for a matrix dump)
//   28  Q records of nx*ny f64 inputs followed by out_n f64 outputs
//
// An optional JSON manifest sits next to the file at "<path>.json".

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "flm/fields.hpp"

namespace flm::io {

inline constexpr std::array<char, 4> kMagic = {'F', 'L', 'M', '1'};
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::uint32_t kMatrixTaskCode = 3;

namespace detail {

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int b = 0; b < 4; ++b) bytes_.push_back(static_cast<char>((v >> (8 * b)) & 0xFFu));
  }
  void f64(double d) {
    const auto v = std::bit_cast<std::uint64_t>(d);
    for (int b = 0; b < 8; ++b) bytes_.push_back(static_cast<char>((v >> (8 * b)) & 0xFFu));
  }
  void raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }

  void save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) fail(ErrorKind::Data, "cannot open '" + path + "' for writing");
    os.write(bytes_.data(), static_cast<std::streamsize>(bytes_.size()));
    if (!os) fail(ErrorKind::Data, "write failed for '" + path + "'");
  }

 private:
  std::vector<char> bytes_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : path_(path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(ErrorKind::Data, "cannot open '" + path + "'");
    bytes_.assign(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n)
      fail(ErrorKind::Data, "'" + path_ + "': truncated payload while reading " + what);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + b])) << (8 * b);
    pos_ += 4;
    return v;
  }
  double f64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + b])) << (8 * b);
    pos_ += 8;
    const double d = std::bit_cast<double>(v);
    if (!std::isfinite(d)) fail(ErrorKind::Data, "'" + path_ + "': non-finite value in " + what);
    return d;
  }
  void magic() {
    need(4, "magic");
    if (std::memcmp(bytes_.data() + pos_, kMagic.data(), 4) != 0)
      fail(ErrorKind::Data, "'" + path_ + "': bad magic, not an FLM1 file");
    pos_ += 4;
  }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

inline std::uint32_t narrow(std::size_t n, const char* what) {
  if (n > UINT32_MAX) fail(ErrorKind::Data, std::string(what) + " exceeds u32 range");
  return static_cast<std::uint32_t>(n);
}

}  // namespace detail

inline std::string manifest_path(const std::string& path) { return path + ".json"; }

inline void write_fields(const std::string& path, const Dataset& data) {
  detail::Writer w;
  w.raw(kMagic.data(), kMagic.size());
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(data.task()));
  w.u32(detail::narrow(data.size(), "Q"));
  w.u32(detail::narrow(data.grid().nx(), "nx"));
  w.u32(detail::narrow(data.grid().ny(), "ny"));
  w.u32(detail::narrow(data.output_size(), "out_n"));
  for (const Sample& s : data.samples()) {
    for (double v : s.input.values()) w.f64(v);
    for (double v : output_values(s.output)) w.f64(v);
  }
  w.save(path);
}

inline Dataset read_fields(const std::string& path) {
  detail::Reader r(path);
  r.magic();
  const std::uint32_t version = r.u32("version");
  if (version != kVersion)
    fail(ErrorKind::Data, "'" + path + "': version " + std::to_string(version) + " unsupported");
  const std::uint32_t task_code = r.u32("task");
  if (task_code > 2)
    fail(ErrorKind::Data, "'" + path + "': task code " + std::to_string(task_code) +
                              " is not a field dataset");
  const auto task = static_cast<TaskKind>(task_code);
  const std::uint32_t q = r.u32("Q");
  const std::uint32_t nx = r.u32("nx");
  const std::uint32_t ny = r.u32("ny");
  const std::uint32_t out_n = r.u32("out_n");
  if (q == 0) fail(ErrorKind::Data, "'" + path + "': Q must be positive");
  const Grid2D grid(nx, ny);
  const std::size_t expected_out = task == TaskKind::ImageToScalar ? 1
                                   : task == TaskKind::ImageToImage ? grid.size()
                                                                    : out_n;
  if (out_n != expected_out || out_n == 0)
    fail(ErrorKind::Data, "'" + path + "': out_n " + std::to_string(out_n) + " inconsistent with task");
  const std::size_t record = (grid.size() + out_n) * 8;
  if (r.remaining() / record < q)
    fail(ErrorKind::Data, "'" + path + "': truncated payload, header declares Q=" + std::to_string(q) +
                              " but only " + std::to_string(r.remaining() / record) +
                              " complete records present");

  std::vector<Sample> samples;
  samples.reserve(q);
  for (std::uint32_t s = 0; s < q; ++s) {
    std::vector<double> in(grid.size()), out(out_n);
    for (double& v : in) v = r.f64("input");
    for (double& v : out) v = r.f64("output");
    samples.push_back({Field2D(grid, std::move(in)), make_output(task, std::move(out), grid)});
  }
  return Dataset(task, std::move(samples));
}

/// Row-major dense matrix dump using the same container with task code 3.
inline void write_matrix(const std::string& path, std::size_t rows, std::size_t cols,
                         std::span<const double> data) {
  if (data.size() != rows * cols) fail(ErrorKind::Data, "matrix payload size mismatch");
  detail::Writer w;
  w.raw(kMagic.data(), kMagic.size());
  w.u32(kVersion);
  w.u32(kMatrixTaskCode);
  w.u32(detail::narrow(rows, "rows"));
  w.u32(detail::narrow(cols, "cols"));
  w.u32(1);
  w.u32(0);
  for (double v : data) w.f64(v);
  w.save(path);
}

struct MatrixDump {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;
};

inline MatrixDump read_matrix(const std::string& path) {
  detail::Reader r(path);
  r.magic();
  if (r.u32("version") != kVersion) fail(ErrorKind::Data, "'" + path + "': unsupported version");
  if (r.u32("task") != kMatrixTaskCode) fail(ErrorKind::Data, "'" + path + "': not a matrix dump");
  MatrixDump m;
  m.rows = r.u32("rows");
  m.cols = r.u32("cols");
  r.u32("ny");
  r.u32("out_n");
  r.need(m.rows * m.cols * 8, "matrix payload");
  m.data.resize(m.rows * m.cols);
  for (double& v : m.data) v = r.f64("matrix");
  return m;
}

}  // namespace flm::io
