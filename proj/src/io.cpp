#include "muasv/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace muasv {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct PairPaths {
  fs::path header;
  fs::path payload;
};

PairPaths pair_paths(const fs::path& path) {
  fs::path base = path;
  const auto ext = base.extension();
  if (ext == ".json" || ext == ".raw") base.replace_extension();
  PairPaths p;
  p.header = base;
  p.header += ".json";
  p.payload = base;
  p.payload += ".raw";
  return p;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw io_error("invalid JSON in " + path.string() + ": " + e.what());
  }
  return j;
}

void write_json_file(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw io_error("write failed for " + path.string());
}

std::vector<float> read_f32_payload(const fs::path& path, std::size_t expected) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw io_error("cannot open " + path.string());
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes != expected * sizeof(float))
    throw io_error("payload size mismatch for " + path.string());
  in.seekg(0);
  std::vector<float> buf(expected);
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(bytes));
  if (!in) throw io_error("short read from " + path.string());
  for (float v : buf) {
    if (!std::isfinite(v))
      throw io_error("non-finite payload value in " + path.string());
  }
  return buf;
}

void write_f32_payload(const std::vector<float>& buf, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!out) throw io_error("write failed for " + path.string());
}

Index get_positive(const json& j, const char* key, const fs::path& where) {
  if (!j.contains(key) || !j[key].is_number_integer())
    throw io_error("missing integer '" + std::string(key) + "' in " + where.string());
  const auto v = j[key].get<std::int64_t>();
  if (v < 1) throw io_error("non-positive '" + std::string(key) + "' in " + where.string());
  return static_cast<Index>(v);
}

void check_format_tags(const json& j, const fs::path& where) {
  if (j.value("dtype", "f32") != "f32")
    throw io_error("unsupported dtype in " + where.string());
  if (j.value("byte_order", "le") != "le")
    throw io_error("unsupported byte order in " + where.string());
}

double parse_double(const std::string& tok, const fs::path& where) {
  double v = 0.0;
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  while (first != last && (*first == ' ' || *first == '\t')) ++first;
  while (last != first && (*(last - 1) == ' ' || *(last - 1) == '\t' || *(last - 1) == '\r')) --last;
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc{} || res.ptr != last)
    throw io_error("invalid numeric token '" + tok + "' in " + where.string());
  return v;
}

}  // namespace

HsiCube read_cube(const fs::path& path) {
  const auto p = pair_paths(path);
  const json header = read_json_file(p.header);
  check_format_tags(header, p.header);
  if (header.value("interleave", "bip") != "bip")
    throw io_error("unsupported interleave in " + p.header.string());

  HsiCube cube;
  cube.rows = get_positive(header, "rows", p.header);
  cube.cols = get_positive(header, "cols", p.header);
  const Index bands = get_positive(header, "bands", p.header);
  const Index n = cube.rows * cube.cols;

  const auto buf = read_f32_payload(p.payload, static_cast<std::size_t>(n * bands));
  cube.data.resize(bands, n);
  for (Index px = 0; px < n; ++px)
    for (Index b = 0; b < bands; ++b)
      cube.data(b, px) = static_cast<double>(buf[static_cast<std::size_t>(px * bands + b)]);
  return cube;
}

void write_cube(const HsiCube& cube, const fs::path& path) {
  if (cube.rows < 1 || cube.cols < 1 || cube.band_count() < 1)
    throw validation_error("empty cube rejected");
  cube.validate();

  const auto p = pair_paths(path);
  json header;
  header["rows"] = cube.rows;
  header["cols"] = cube.cols;
  header["bands"] = cube.band_count();
  header["dtype"] = "f32";
  header["interleave"] = "bip";
  header["byte_order"] = "le";
  write_json_file(header, p.header);

  const Index n = cube.pixel_count();
  const Index bands = cube.band_count();
  std::vector<float> buf(static_cast<std::size_t>(n * bands));
  for (Index px = 0; px < n; ++px)
    for (Index b = 0; b < bands; ++b)
      buf[static_cast<std::size_t>(px * bands + b)] = static_cast<float>(cube.data(b, px));
  write_f32_payload(buf, p.payload);
}

FieldFile read_field(const fs::path& path) {
  const auto p = pair_paths(path);
  const json header = read_json_file(p.header);
  check_format_tags(header, p.header);

  FieldFile out;
  out.rows = get_positive(header, "rows", p.header);
  out.cols = get_positive(header, "cols", p.header);
  const Index bands = get_positive(header, "bands", p.header);
  const Index ems = get_positive(header, "endmembers", p.header);
  const Index n = out.rows * out.cols;

  const auto buf =
      read_f32_payload(p.payload, static_cast<std::size_t>(n * ems * bands));
  out.field.pixels.resize(static_cast<std::size_t>(n));
  std::size_t k = 0;
  for (Index px = 0; px < n; ++px) {
    Matrix& m = out.field.pixels[static_cast<std::size_t>(px)];
    m.resize(bands, ems);
    for (Index e = 0; e < ems; ++e)
      for (Index b = 0; b < bands; ++b) m(b, e) = static_cast<double>(buf[k++]);
  }
  return out;
}

void write_field(const EndmemberField& field, Index rows, Index cols,
                 const fs::path& path) {
  if (field.pixels.empty()) throw validation_error("empty field rejected");
  if (rows * cols != field.pixel_count())
    throw validation_error("field pixel count does not match rows*cols");

  const auto p = pair_paths(path);
  const Index bands = field.band_count();
  const Index ems = field.endmember_count();
  json header;
  header["rows"] = rows;
  header["cols"] = cols;
  header["bands"] = bands;
  header["endmembers"] = ems;
  header["dtype"] = "f32";
  header["byte_order"] = "le";
  write_json_file(header, p.header);

  std::vector<float> buf;
  buf.reserve(static_cast<std::size_t>(field.pixel_count() * ems * bands));
  for (const Matrix& m : field.pixels)
    for (Index e = 0; e < ems; ++e)
      for (Index b = 0; b < bands; ++b) buf.push_back(static_cast<float>(m(b, e)));
  write_f32_payload(buf, p.payload);
}

Matrix read_csv_matrix(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) row.push_back(parse_double(tok, path));
    if (!rows.empty() && row.size() != rows.front().size())
      throw io_error("ragged CSV rows in " + path.string());
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw io_error("empty CSV " + path.string());
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j)
      m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return m;
}

void write_csv_matrix(const Matrix& m, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path.string());
  char buf[64];
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
      out << buf;
      if (j + 1 < m.cols()) out << ',';
    }
    out << '\n';
  }
  if (!out) throw io_error("write failed for " + path.string());
}

EndmemberSet read_endmember_csv(const fs::path& path) {
  EndmemberSet set;
  set.data = read_csv_matrix(path);
  set.validate();
  return set;
}

void write_scaling_csv(const ScalingField& psi, const fs::path& path) {
  write_csv_matrix(psi.data.transpose(), path);
}

ScalingField read_scaling_csv(const fs::path& path) {
  ScalingField f;
  f.data = read_csv_matrix(path).transpose();
  return f;
}

void write_labels_csv(const std::vector<Index>& labels, Index rows, Index cols,
                      const fs::path& path) {
  if (static_cast<Index>(labels.size()) != rows * cols)
    throw validation_error("label count does not match rows*cols");
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path.string());
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      out << labels[static_cast<std::size_t>(r * cols + c)];
      if (c + 1 < cols) out << ',';
    }
    out << '\n';
  }
  if (!out) throw io_error("write failed for " + path.string());
}

void write_pgm(const Eigen::Ref<const Vector>& values, Index rows, Index cols,
               const fs::path& path) {
  if (values.size() != rows * cols)
    throw validation_error("pgm value count does not match rows*cols");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write " + path.string());
  out << "P5\n" << cols << ' ' << rows << "\n255\n";
  std::vector<unsigned char> bytes(static_cast<std::size_t>(rows * cols));
  for (Index i = 0; i < values.size(); ++i) {
    const double v = std::clamp(values[i], 0.0, 1.0);
    bytes[static_cast<std::size_t>(i)] =
        static_cast<unsigned char>(std::lround(v * 255.0));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw io_error("write failed for " + path.string());
}

void write_metrics_json(const MetricsReport& report, const fs::path& path) {
  report.validate();
  json j = json::object();
  if (report.mse_a) j["mse_a"] = *report.mse_a;
  if (report.mse_m) j["mse_m"] = *report.mse_m;
  if (report.mse_y) j["mse_y"] = *report.mse_y;
  if (report.sam_m) j["sam_m"] = *report.sam_m;
  if (report.wall_time_s) j["wall_time_s"] = *report.wall_time_s;
  write_json_file(j, path);
}

MetricsReport read_metrics_json(const fs::path& path) {
  const json j = read_json_file(path);
  MetricsReport r;
  if (j.contains("mse_a")) r.mse_a = j["mse_a"].get<double>();
  if (j.contains("mse_m")) r.mse_m = j["mse_m"].get<double>();
  if (j.contains("mse_y")) r.mse_y = j["mse_y"].get<double>();
  if (j.contains("sam_m")) r.sam_m = j["sam_m"].get<double>();
  if (j.contains("wall_time_s")) r.wall_time_s = j["wall_time_s"].get<double>();
  return r;
}

}  // namespace muasv
