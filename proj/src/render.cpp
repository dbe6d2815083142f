#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "groups/harness.hpp"

namespace groups {
namespace {

namespace fs = std::filesystem;

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name, const fs::path& path) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::runtime_error(path.string() + ": no column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  }
};

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

Csv read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  Csv csv;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty file");
  csv.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    csv.rows.push_back(split(line));
    if (csv.rows.back().size() != csv.header.size())
      throw std::runtime_error(fmt::format("{}: row {} has {} cells, header has {}", path.string(), csv.rows.size(),
                                           csv.rows.back().size(), csv.header.size()));
  }
  return csv;
}

double to_double(const std::string& s) {
  if (s == "nan") return std::nan("");
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument("not a number: " + s);
  return v;
}

SessionStats stats_of(const std::vector<std::vector<double>>& columns) {
  SessionStats s;
  for (const auto& c : columns) {
    const double n = static_cast<double>(c.size());
    double mean = 0.0;
    for (double x : c) mean += x / n;
    double ss = 0.0;
    for (double x : c) ss += (x - mean) * (x - mean);
    s.mean.push_back(mean);
    s.std.push_back(c.size() > 1 ? std::sqrt(ss / (n - 1)) : 0.0);
  }
  return s;
}

struct Band {
  std::string label;
  SessionStats stats;
};

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

void write_svg(const std::vector<Band>& bands, const fs::path& out, const std::string& title,
               const std::string& ylabel = "reward (cm)") {
  if (bands.empty()) throw std::invalid_argument("render: nothing to plot");
  double lo = INFINITY, hi = -INFINITY;
  std::size_t n = 0;
  for (const auto& b : bands) {
    if (b.stats.mean.empty()) throw std::invalid_argument("render: empty trace for " + b.label);
    n = std::max(n, b.stats.mean.size());
    for (std::size_t i = 0; i < b.stats.mean.size(); ++i) {
      lo = std::min(lo, b.stats.mean[i] - b.stats.std[i]);
      hi = std::max(hi, b.stats.mean[i] + b.stats.std[i]);
    }
  }
  if (!(hi > lo)) {
    lo -= 1.0;
    hi += 1.0;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  const double W = 640, H = 400, left = 70, right = 150, top = 40, bottom = 50;
  const double xmax = std::max<double>(1.0, static_cast<double>(n - 1));
  auto X = [&](double i) { return left + (W - left - right) * i / xmax; };
  auto Y = [&](double v) { return top + (H - top - bottom) * (hi - v) / (hi - lo); };

  std::ostringstream svg;
  svg << fmt::format(R"(<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="12">)",
                     W, H)
      << '\n';
  svg << fmt::format(R"(<rect width="{}" height="{}" fill="white"/>)", W, H) << '\n';
  if (!title.empty()) svg << fmt::format(R"(<text x="{}" y="22" font-size="14">{}</text>)", left, title) << '\n';
  svg << fmt::format(R"(<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>)", left, top,
                     W - left - right, H - top - bottom)
      << '\n';
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    svg << fmt::format(R"(<text x="{}" y="{:.2f}" text-anchor="end">{:.3g}</text>)", left - 6, Y(v) + 4, v) << '\n';
  }
  const std::size_t step = std::max<std::size_t>(1, (n - 1) / 10 + 1);
  for (std::size_t i = 0; i < n; i += step)
    svg << fmt::format(R"(<text x="{:.2f}" y="{}" text-anchor="middle">{}</text>)", X(static_cast<double>(i)),
                       H - bottom + 16, i)
        << '\n';
  svg << fmt::format(R"(<text x="{}" y="{}" text-anchor="middle">iteration</text>)", left + (W - left - right) / 2,
                     H - 12)
      << '\n';
  svg << fmt::format(R"svg(<text x="16" y="{}" transform="rotate(-90 16 {})" text-anchor="middle">{}</text>)svg",
                     top + (H - top - bottom) / 2, top + (H - top - bottom) / 2, ylabel)
      << '\n';

  for (std::size_t b = 0; b < bands.size(); ++b) {
    const auto& s = bands[b].stats;
    const char* color = kPalette[b % std::size(kPalette)];
    std::string upper, lower, line;
    for (std::size_t i = 0; i < s.mean.size(); ++i) {
      const double x = X(static_cast<double>(i));
      upper += fmt::format("{:.2f},{:.2f} ", x, Y(s.mean[i] + s.std[i]));
      line += fmt::format("{:.2f},{:.2f} ", x, Y(s.mean[i]));
    }
    for (std::size_t i = s.mean.size(); i-- > 0;)
      lower += fmt::format("{:.2f},{:.2f} ", X(static_cast<double>(i)), Y(s.mean[i] - s.std[i]));
    svg << fmt::format(R"(<polygon class="band" points="{}{}" fill="{}" fill-opacity="0.2" stroke="none"/>)", upper,
                       lower, color)
        << '\n';
    svg << fmt::format(R"(<polyline class="mean" points="{}" fill="none" stroke="{}" stroke-width="2"/>)", line, color)
        << '\n';
    const double ly = top + 10 + 18.0 * static_cast<double>(b);
    svg << fmt::format(R"(<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{}" stroke-width="2"/>)", W - right + 12, ly,
                       W - right + 32, ly, color)
        << fmt::format(R"(<text x="{}" y="{}">{}</text>)", W - right + 38, ly + 4, bands[b].label) << '\n';
  }
  svg << "</svg>\n";

  if (!out.parent_path().empty()) fs::create_directories(out.parent_path());
  std::ofstream f(out, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + out.string());
  f << svg.str();
}

std::vector<fs::path> sorted_entries(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

SessionStats curve_stats(const std::vector<fs::path>& csvs, const std::string& column) {
  if (csvs.empty()) throw std::invalid_argument("curve_stats: no input files");
  std::vector<std::string> iterations;
  std::vector<std::vector<double>> values;
  for (const auto& path : csvs) {
    const Csv csv = read_csv(path);
    if (csv.rows.empty()) throw std::runtime_error(path.string() + ": empty trace");
    const auto it = csv.column("iteration", path), col = csv.column(column, path);
    std::vector<std::string> its;
    for (const auto& r : csv.rows) its.push_back(r[it]);
    if (values.empty()) {
      iterations = its;
      values.resize(its.size());
    } else if (its != iterations) {
      throw std::runtime_error(path.string() + ": iterations differ from " + csvs.front().string());
    }
    for (std::size_t i = 0; i < csv.rows.size(); ++i) values[i].push_back(to_double(csv.rows[i][col]));
  }
  return stats_of(values);
}

void render_curves(const std::vector<CurveSeries>& series, const fs::path& out, const std::string& title) {
  std::vector<Band> bands;
  for (const auto& s : series) bands.push_back({s.label, curve_stats(s.session_csvs)});
  write_svg(bands, out, title);
}

std::vector<fs::path> render_run(const fs::path& run_dir, const fs::path& out_dir) {
  if (!fs::is_directory(run_dir)) throw std::runtime_error("run directory not found: " + run_dir.string());
  std::vector<fs::path> written;

  for (const auto& media : sorted_entries(run_dir)) {
    if (!fs::is_directory(media)) continue;
    std::vector<CurveSeries> series;
    for (const auto& fin : sorted_entries(media)) {
      const auto name = fin.filename().string();
      if (!fs::is_directory(fin) || name.rfind("fin_", 0) != 0) continue;
      CurveSeries s{"fin " + name.substr(4), {}};
      for (const auto& f : sorted_entries(fin))
        if (f.extension() == ".csv" && f.filename().string().rfind("session_", 0) == 0) s.session_csvs.push_back(f);
      if (!s.session_csvs.empty()) series.push_back(std::move(s));
    }
    if (series.empty()) continue;
    const auto out = out_dir / (media.filename().string() + ".svg");
    render_curves(series, out, "mean-policy reward, " + media.filename().string());
    written.push_back(out);
  }

  if (fs::exists(run_dir / "transfer.csv")) {
    const auto path = run_dir / "transfer.csv";
    const Csv csv = read_csv(path);
    const std::string cols[] = {"learned_source_eval_source", "learned_source_eval_target",
                                "learned_target_eval_target"};
    const std::size_t fin = csv.column("fin", path), it = csv.column("iteration", path);
    std::map<std::string, std::map<int, std::vector<std::vector<double>>>> by_fin;  // fin -> iteration -> col
    for (const auto& r : csv.rows) {
      auto& cell = by_fin[r[fin]][std::stoi(r[it])];
      cell.resize(3);
      for (int c = 0; c < 3; ++c) cell[c].push_back(to_double(r[csv.column(cols[c], path)]));
    }
    for (const auto& [label, iterations] : by_fin) {
      std::vector<Band> bands;
      for (int c = 0; c < 3; ++c) {
        std::vector<std::vector<double>> v;
        for (const auto& [i, cell] : iterations) v.push_back(cell[c]);
        bands.push_back({cols[c], stats_of(v)});
      }
      const auto out = out_dir / ("transfer_fin_" + label + ".svg");
      write_svg(bands, out, "transfer, fin " + label);
      written.push_back(out);
    }
  }

  if (fs::exists(run_dir / "synthetic.csv")) {
    const auto path = run_dir / "synthetic.csv";
    const Csv csv = read_csv(path);
    const std::size_t stub = csv.column("stub", path), method = csv.column("method", path),
                      it = csv.column("iteration", path), reward = csv.column("mean_policy_reward", path);
    std::map<std::string, std::map<std::string, std::map<int, std::vector<double>>>> groups;
    for (const auto& r : csv.rows) groups[r[stub]][r[method]][std::stoi(r[it])].push_back(to_double(r[reward]));
    for (const auto& [name, methods] : groups) {
      std::vector<Band> bands;
      for (const auto& [m, iterations] : methods) {
        std::vector<std::vector<double>> v;
        for (const auto& [i, cell] : iterations) v.push_back(cell);
        bands.push_back({m, stats_of(v)});
      }
      const auto out = out_dir / ("synthetic_" + name + ".svg");
      write_svg(bands, out, "synthetic, " + name, "reward");
      written.push_back(out);
    }
  }

  if (written.empty()) throw std::runtime_error("nothing to render in " + run_dir.string());
  return written;
}

}  // namespace groups
