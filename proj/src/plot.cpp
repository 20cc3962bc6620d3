#include "rfl/experiment.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <limits>
#include <map>
#include <stdexcept>

namespace rfl {
namespace {

struct Band {
  double mean = 0.0, lo = 0.0, hi = 0.0;
};

using Series = std::map<double, Band>;  // x -> aggregate over seeds

Band summarize(const std::vector<double>& v) {
  Band b{0.0, v.front(), v.front()};
  for (double x : v) {
    b.mean += x;
    b.lo = std::min(b.lo, x);
    b.hi = std::max(b.hi, x);
  }
  b.mean /= static_cast<double>(v.size());
  return b;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

}  // namespace

PlotKind parse_plot_kind(std::string_view name) {
  if (name == "acc_vs_round") return PlotKind::acc_vs_round;
  if (name == "loss_vs_round") return PlotKind::loss_vs_round;
  if (name == "acc_vs_nodes") return PlotKind::acc_vs_nodes;
  if (name == "loss_vs_nodes") return PlotKind::loss_vs_nodes;
  throw std::invalid_argument("unknown plot kind '" + std::string(name) +
                              "' (expected acc_vs_round, loss_vs_round, acc_vs_nodes, loss_vs_nodes)");
}

std::string render_plot(const std::vector<MetricsRow>& rows, PlotKind kind) {
  if (rows.empty()) throw std::invalid_argument("render_plot: no rows");
  const bool acc = kind == PlotKind::acc_vs_round || kind == PlotKind::acc_vs_nodes;
  const bool by_round = kind == PlotKind::acc_vs_round || kind == PlotKind::loss_vs_round;
  auto value = [&](const MetricsRow& r) { return acc ? r.test_accuracy : r.train_loss; };

  // Per-round plots get one series per (scheme, N); per-node plots use the
  // last round of each run.
  std::map<std::string, std::map<double, std::vector<double>>> raw;
  if (by_round) {
    for (const auto& r : rows) {
      raw[fmt::format("{} N={}", r.scheme, r.nodes)][r.round].push_back(value(r));
    }
  } else {
    std::map<std::tuple<std::string, int, std::uint64_t>, const MetricsRow*> last;
    for (const auto& r : rows) {
      auto& slot = last[{r.scheme, r.nodes, r.seed}];
      if (slot == nullptr || r.round >= slot->round) slot = &r;
    }
    for (const auto& [key, r] : last) raw[std::get<0>(key)][std::get<1>(key)].push_back(value(*r));
  }

  std::map<std::string, Series> series;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& [name, points] : raw) {
    for (const auto& [x, vals] : points) {
      const Band b = summarize(vals);
      series[name][x] = b;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, b.lo);
      y1 = std::max(y1, b.hi);
    }
  }
  if (x1 == x0) x1 = x0 + 1.0;
  if (y1 == y0) y1 = y0 + 1.0;

  const double W = 720, H = 440, L = 70, R = 180, T = 30, B = 50;
  auto sx = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto sy = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      W, H, W, H);
  svg += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n", L, H - B, W - R, H - B);
  svg += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n", L, T, L, H - B);
  for (int i = 0; i <= 4; ++i) {
    const double fx = x0 + (x1 - x0) * i / 4.0, fy = y0 + (y1 - y0) * i / 4.0;
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{:.4g}</text>\n", sx(fx),
                       H - B + 16, fx);
    svg += fmt::format("<text x=\"{}\" y=\"{:.1f}\" font-size=\"11\" text-anchor=\"end\">{:.4g}</text>\n", L - 6,
                       sy(fy) + 4, fy);
  }
  svg += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">{}</text>\n", (L + W - R) / 2,
                     H - 12, by_round ? "round" : "nodes");
  svg += fmt::format(
      "<text x=\"16\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
      (T + H - B) / 2, (T + H - B) / 2, acc ? "test accuracy" : "training loss");

  std::size_t idx = 0;
  for (const auto& [name, pts] : series) {
    const char* color = kPalette[idx % std::size(kPalette)];
    bool banded = false;
    for (const auto& [x, b] : pts) banded = banded || b.hi > b.lo;
    if (banded) {
      std::string poly;
      for (const auto& [x, b] : pts) poly += fmt::format("{:.2f},{:.2f} ", sx(x), sy(b.hi));
      for (auto it = pts.rbegin(); it != pts.rend(); ++it) poly += fmt::format("{:.2f},{:.2f} ", sx(it->first), sy(it->second.lo));
      svg += fmt::format("<polygon points=\"{}\" fill=\"{}\" fill-opacity=\"0.2\" stroke=\"none\"/>\n", poly, color);
    }
    std::string line;
    for (const auto& [x, b] : pts) line += fmt::format("{:.2f},{:.2f} ", sx(x), sy(b.mean));
    svg += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n", line, color);
    const double ly = T + 10 + 18.0 * static_cast<double>(idx);
    svg += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"2\"/>\n", W - R + 12, ly,
                       W - R + 32, ly, color);
    svg += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"11\">{}</text>\n", W - R + 38, ly + 4, name);
    ++idx;
  }
  svg += "</svg>\n";
  return svg;
}

void emit_plot(const std::filesystem::path& csv, PlotKind kind, const std::filesystem::path& out) {
  const std::string svg = render_plot(read_metrics_csv(csv), kind);
  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  write_file_atomic(out, svg);
}

}  // namespace rfl
