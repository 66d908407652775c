#pragma once

// Deterministic file output: CSV tables (doubles serialized with %.17g so a
// rerun is byte-identical), static SVG line plots, and the density-field
// exports (CSV and a compact little-endian binary).

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hydro.hpp"

namespace trapsim {

inline std::string format_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string format_short(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::vector<std::string>& add_row() {
    rows.emplace_back();
    return rows.back();
  }
};

inline std::string cell(double v) { return format_full(v); }
inline std::string cell(long long v) { return std::to_string(v); }
inline std::string cell(long v) { return std::to_string(v); }
inline std::string cell(unsigned long v) { return std::to_string(v); }
inline std::string cell(int v) { return std::to_string(v); }
inline std::string cell(const std::string& v) { return v; }

inline void write_csv(const std::string& path, const Table& t) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  for (std::size_t i = 0; i < t.header.size(); ++i)
    out << (i ? "," : "") << t.header[i];
  out << "\n";
  for (const auto& row : t.rows) {
    if (row.size() != t.header.size())
      throw std::runtime_error("csv row width mismatch in " + path);
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << "\n";
  }
  if (!out) throw std::runtime_error("short write: " + path);
}

// ---- SVG line plots ---------------------------------------------------------

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

// Fixed-size static plot with linear axes; enough for convergence curves.
inline void write_svg_plot(const std::string& path, const std::string& title,
                           const std::string& xlabel, const std::string& ylabel,
                           const std::vector<PlotSeries>& series) {
  static const char* palette[6] = {"#1f6fb2", "#c2402a", "#2f8a4c",
                                   "#8252a1", "#b8860b", "#3a3a3a"};
  const double W = 640, H = 420;
  const double L = 70, R = 20, T = 40, B = 50;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const PlotSeries& s : series) {
    if (s.x.size() != s.y.size())
      throw std::invalid_argument("plot series length mismatch");
    for (double v : s.x) {
      xmin = std::min(xmin, v);
      xmax = std::max(xmax, v);
    }
    for (double v : s.y) {
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  }
  if (!(xmin <= xmax) || !(ymin <= ymax))
    throw std::invalid_argument("plot needs at least one point");
  if (xmax == xmin) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  if (ymax == ymin) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;
  auto px = [&](double v) { return L + (v - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double v) { return H - B - (v - ymin) / (ymax - ymin) * (H - T - B); };

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
  out << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\""
      << " font-size=\"15\">" << title << "</text>\n";
  // axes
  out << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\""
      << H - B << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    double fx = xmin + (xmax - xmin) * k / 4.0;
    double fy = ymin + (ymax - ymin) * k / 4.0;
    out << "<line x1=\"" << px(fx) << "\" y1=\"" << H - B << "\" x2=\"" << px(fx)
        << "\" y2=\"" << H - B + 5 << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << px(fx) << "\" y=\"" << H - B + 18
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
        << format_short(fx) << "</text>\n";
    out << "<line x1=\"" << L - 5 << "\" y1=\"" << py(fy) << "\" x2=\"" << L << "\" y2=\""
        << py(fy) << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << L - 8 << "\" y=\"" << py(fy) + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
        << format_short(fy) << "</text>\n";
  }
  out << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << xlabel
      << "</text>\n";
  out << "<text x=\"16\" y=\"" << (T + H - B) / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\""
      << " transform=\"rotate(-90 16 " << (T + H - B) / 2 << ")\">" << ylabel
      << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const PlotSeries& s = series[i];
    const char* color = palette[i % 6];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < s.x.size(); ++k)
      out << (k ? " " : "") << format_short(px(s.x[k])) << "," << format_short(py(s.y[k]));
    out << "\"/>\n";
    for (std::size_t k = 0; k < s.x.size(); ++k)
      out << "<circle cx=\"" << format_short(px(s.x[k])) << "\" cy=\""
          << format_short(py(s.y[k])) << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
    double ly = T + 14 + 16 * static_cast<double>(i);
    out << "<line x1=\"" << W - R - 120 << "\" y1=\"" << ly - 4 << "\" x2=\"" << W - R - 100
        << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << W - R - 95 << "\" y=\"" << ly
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << s.label << "</text>\n";
  }
  out << "</svg>\n";
  if (!out) throw std::runtime_error("short write: " + path);
}

// ---- density field export ---------------------------------------------------

inline void write_density_csv(const std::string& path, const DensityField& df, int N) {
  Table t;
  t.header = {"t", "x", "u"};
  for (std::size_t k = 0; k < df.times.size(); ++k) {
    if (df.u[k].size() != static_cast<std::size_t>(N))
      throw std::invalid_argument("density row does not match N");
    for (int x = 0; x < N; ++x) {
      auto& row = t.add_row();
      row.push_back(cell(df.times[k]));
      row.push_back(cell(x));
      row.push_back(cell(df.u[k][static_cast<std::size_t>(x)]));
    }
  }
  write_csv(path, t);
}

namespace io_detail {

inline void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf += static_cast<char>((v >> (8 * i)) & 0xFF);
}

inline void put_f64(std::string& buf, double x) {
  std::uint64_t bits;
  static_assert(sizeof bits == sizeof x);
  __builtin_memcpy(&bits, &x, sizeof bits);
  for (int i = 0; i < 8; ++i) buf += static_cast<char>((bits >> (8 * i)) & 0xFF);
}

inline std::uint32_t get_u32(const std::string& buf, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[at + i])) << (8 * i);
  return v;
}

inline double get_f64(const std::string& buf, std::size_t at) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i)
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[at + i])) << (8 * i);
  double x;
  __builtin_memcpy(&x, &bits, sizeof x);
  return x;
}

}  // namespace io_detail

// Header {u32 N, u32 n_times}, then n_times * N doubles row-major,
// little-endian. Times are not stored; the CSV export carries them.
inline void write_density_binary(const std::string& path, const DensityField& df, int N) {
  std::string buf;
  buf.reserve(8 + 8 * df.times.size() * static_cast<std::size_t>(N));
  io_detail::put_u32(buf, static_cast<std::uint32_t>(N));
  io_detail::put_u32(buf, static_cast<std::uint32_t>(df.times.size()));
  for (std::size_t k = 0; k < df.times.size(); ++k) {
    if (df.u[k].size() != static_cast<std::size_t>(N))
      throw std::invalid_argument("density row does not match N");
    for (double v : df.u[k]) io_detail::put_f64(buf, v);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("short write: " + path);
}

struct DensityMatrix {
  std::uint32_t N = 0;
  std::uint32_t n_times = 0;
  std::vector<double> values;  // row-major, n_times x N
};

inline DensityMatrix read_density_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 8) throw std::runtime_error("density file truncated: " + path);
  DensityMatrix m;
  m.N = io_detail::get_u32(buf, 0);
  m.n_times = io_detail::get_u32(buf, 4);
  std::size_t want = 8 + 8ull * m.N * m.n_times;
  if (buf.size() != want) throw std::runtime_error("density file truncated: " + path);
  m.values.resize(static_cast<std::size_t>(m.N) * m.n_times);
  for (std::size_t i = 0; i < m.values.size(); ++i)
    m.values[i] = io_detail::get_f64(buf, 8 + 8 * i);
  return m;
}

}  // namespace trapsim
