#include "dpsr/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dpsr/config_io.hpp"
#include "dpsr/errors.hpp"

namespace dpsr {
namespace {

const char* rank_name(Rank r) {
  switch (r) {
    case Rank::best: return "best";
    case Rank::second: return "second";
    default: return "";
  }
}

std::optional<double> metric_value(const TableEntry& e, Metric m) {
  switch (m) {
    case Metric::psnr: return e.psnr_db;
    case Metric::ssim: return e.ssim;
    default: return e.lpips;
  }
}

Rank& rank_slot(RankedEntry& r, Metric m) {
  switch (m) {
    case Metric::psnr: return r.psnr;
    case Metric::ssim: return r.ssim;
    default: return r.lpips;
  }
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  for (std::string s; std::getline(ss, s, ',');) f.push_back(s);
  if (!line.empty() && line.back() == ',') f.emplace_back();
  return f;
}

std::string fixed(double v, int digits) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

template <typename T>
std::vector<T> unique_in_order(const std::vector<TableEntry>& entries, T TableEntry::*field) {
  std::vector<T> out;
  for (const auto& e : entries)
    if (std::find(out.begin(), out.end(), e.*field) == out.end()) out.push_back(e.*field);
  return out;
}

}  // namespace

TableEntry TableEntry::from_report(std::string method, std::string dataset, const MetricReport& report) {
  return {std::move(method), std::move(dataset), report.mean_psnr_db, report.mean_ssim, report.mean_lpips};
}

bool higher_is_better(Metric metric) { return metric != Metric::lpips; }

std::vector<RankedEntry> rank_entries(const std::vector<TableEntry>& entries) {
  std::vector<RankedEntry> ranked;
  for (const auto& e : entries) ranked.push_back({e});

  for (const auto& dataset : unique_in_order(entries, &TableEntry::dataset)) {
    for (Metric m : {Metric::psnr, Metric::ssim, Metric::lpips}) {
      std::vector<std::size_t> rows;
      std::vector<double> values;
      for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto v = metric_value(entries[i], m);
        if (entries[i].dataset == dataset && v && !std::isnan(*v)) {
          rows.push_back(i);
          values.push_back(*v);
        }
      }
      if (rows.size() < 2) continue;
      std::vector<double> distinct = values;
      std::sort(distinct.begin(), distinct.end());
      distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
      if (higher_is_better(m)) std::reverse(distinct.begin(), distinct.end());
      for (std::size_t k = 0; k < rows.size(); ++k) {
        if (values[k] == distinct[0]) rank_slot(ranked[rows[k]], m) = Rank::best;
        else if (distinct.size() > 1 && values[k] == distinct[1]) rank_slot(ranked[rows[k]], m) = Rank::second;
      }
    }
  }
  return ranked;
}

std::string format_text_table(const std::vector<RankedEntry>& ranked) {
  std::vector<TableEntry> entries;
  for (const auto& r : ranked) entries.push_back(r.entry);
  const auto methods = unique_in_order(entries, &TableEntry::method);
  const auto datasets = unique_in_order(entries, &TableEntry::dataset);

  auto mark = [](Rank r) { return r == Rank::best ? "(1)" : r == Rank::second ? "(2)" : ""; };
  // header rows + one row per method
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> head1 = {""}, head2 = {"Method"};
  for (const auto& d : datasets) {
    for (const char* metric : {"PSNR", "SSIM", "LPIPS"}) {
      head1.push_back(d);
      head2.push_back(metric);
    }
  }
  cells.push_back(head1);
  cells.push_back(head2);
  for (const auto& method : methods) {
    std::vector<std::string> row = {method};
    for (const auto& d : datasets) {
      const RankedEntry* found = nullptr;
      for (const auto& r : ranked)
        if (r.entry.method == method && r.entry.dataset == d) found = &r;
      if (!found) {
        row.insert(row.end(), {"-", "-", "-"});
        continue;
      }
      row.push_back(fixed(found->entry.psnr_db, 2) + mark(found->psnr));
      row.push_back(fixed(found->entry.ssim, 4) + mark(found->ssim));
      row.push_back(found->entry.lpips ? fixed(*found->entry.lpips, 4) + mark(found->lpips) : std::string("NA"));
    }
    cells.push_back(row);
  }

  std::vector<std::size_t> widths(cells[0].size(), 0);
  for (const auto& row : cells)
    for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());
  std::ostringstream out;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t c = 0; c < cells[r].size(); ++c) {
      if (c) out << "  ";
      const auto& s = cells[r][c];
      if (c == 0) out << s << std::string(widths[c] - s.size(), ' ');
      else out << std::string(widths[c] - s.size(), ' ') << s;
    }
    out << '\n';
    if (r == 1) {
      std::size_t total = 0;
      for (auto w : widths) total += w + 2;
      out << std::string(total - 2, '-') << '\n';
    }
  }
  return out.str();
}

std::vector<std::filesystem::path> emit_comparison_table(const std::vector<TableEntry>& entries,
                                                         const std::filesystem::path& out_prefix,
                                                         TableFormat format) {
  if (entries.empty()) throw ValidationError("comparison table needs at least one report");
  for (const auto& e : entries)
    if (e.method.find(',') != std::string::npos || e.dataset.find(',') != std::string::npos)
      throw ValidationError("method and dataset names must not contain commas: '" + e.method + "'");
  const auto ranked = rank_entries(entries);
  if (out_prefix.has_parent_path()) std::filesystem::create_directories(out_prefix.parent_path());
  std::vector<std::filesystem::path> written;

  if (format != TableFormat::text) {
    auto path = out_prefix;
    path += ".csv";
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "method,dataset,psnr_db,ssim,lpips,psnr_rank,ssim_rank,lpips_rank\n";
    for (const auto& r : ranked) {
      const auto& e = r.entry;
      out << e.method << ',' << e.dataset << ',' << format_real(e.psnr_db) << ',' << format_real(e.ssim) << ','
          << (e.lpips ? format_real(*e.lpips) : "NA") << ',' << rank_name(r.psnr) << ',' << rank_name(r.ssim) << ','
          << rank_name(r.lpips) << '\n';
    }
    written.push_back(path);
  }
  if (format != TableFormat::csv) {
    auto path = out_prefix;
    path += ".txt";
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << format_text_table(ranked);
    written.push_back(path);
  }
  return written;
}

std::vector<TableEntry> read_table_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw LoadError("empty table: " + path.string());
  const auto header = split_csv(line);
  if (header.size() < 5 || header[0] != "method" || header[1] != "dataset" || header[2] != "psnr_db" ||
      header[3] != "ssim" || header[4] != "lpips")
    throw LoadError("table must start with method,dataset,psnr_db,ssim,lpips: " + path.string());
  std::vector<TableEntry> entries;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto f = split_csv(line);
    if (f.size() < 5) throw LoadError("malformed table line: " + line);
    TableEntry e{f[0], f[1], parse_real(f[2]), parse_real(f[3]), std::nullopt};
    if (f[4] != "NA" && !f[4].empty()) e.lpips = parse_real(f[4]);
    entries.push_back(e);
  }
  return entries;
}

std::string lpips_chart_svg(const std::vector<TableEntry>& all, const std::string& title) {
  std::vector<TableEntry> entries;
  for (const auto& e : all)
    if (e.lpips && std::isfinite(*e.lpips)) entries.push_back(e);
  if (entries.empty()) throw ValidationError("chart: no entries carry LPIPS");

  const auto methods = unique_in_order(entries, &TableEntry::method);
  const auto datasets = unique_in_order(entries, &TableEntry::dataset);
  double lo = *entries.front().lpips, hi = lo;
  for (const auto& e : entries) {
    lo = std::min(lo, *e.lpips);
    hi = std::max(hi, *e.lpips);
  }
  const double pad = hi > lo ? 0.1 * (hi - lo) : std::max(0.01, 0.1 * std::abs(hi));
  lo -= pad;
  hi += pad;

  const double width = 120.0 + 90.0 * static_cast<double>(std::max<std::size_t>(methods.size(), 2));
  const double height = 360.0, left = 70.0, right = 140.0, top = 40.0, bottom = 70.0;
  const double plot_w = width - left - right, plot_h = height - top - bottom;
  auto px = [&](std::size_t i) {
    return methods.size() == 1 ? left + plot_w / 2.0
                               : left + plot_w * static_cast<double>(i) / static_cast<double>(methods.size() - 1);
  };
  auto py = [&](double v) { return top + plot_h * (hi - v) / (hi - lo); };
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};

  std::ostringstream s;
  char buf[256];
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fixed(width, 0) << "\" height=\"" << fixed(height, 0)
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << fixed(width / 2, 1) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(title)
    << "</text>\n";
  std::snprintf(buf, sizeof(buf), "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" stroke=\"#444\"/>\n",
                left, top, plot_w, plot_h);
  s << buf;
  for (int t = 0; t <= 4; ++t) {
    const double v = lo + (hi - lo) * t / 4.0;
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#ddd\"/>"
                  "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%.4f</text>\n",
                  left, py(v), left + plot_w, py(v), left - 6, py(v) + 4, v);
    s << buf;
  }
  for (std::size_t i = 0; i < methods.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">", px(i), top + plot_h + 18);
    s << buf << xml_escape(methods[i]) << "</text>\n";
  }
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    const char* color = palette[d % std::size(palette)];
    std::string points;
    std::string dots;
    for (std::size_t i = 0; i < methods.size(); ++i) {
      for (const auto& e : entries) {
        if (e.method != methods[i] || e.dataset != datasets[d]) continue;
        std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", px(i), py(*e.lpips));
        points += buf;
        std::snprintf(buf, sizeof(buf), "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3.5\" fill=\"%s\"/>\n", px(i),
                      py(*e.lpips), color);
        dots += buf;
      }
    }
    if (!points.empty()) points.pop_back();
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"" << points << "\"/>\n" << dots;
    std::snprintf(buf, sizeof(buf), "<rect x=\"%.1f\" y=\"%.1f\" width=\"12\" height=\"12\" fill=\"%s\"/>",
                  left + plot_w + 16, top + 20.0 * static_cast<double>(d), color);
    s << buf;
    std::snprintf(buf, sizeof(buf), "<text x=\"%.1f\" y=\"%.1f\">", left + plot_w + 34,
                  top + 10 + 20.0 * static_cast<double>(d));
    s << buf << xml_escape(datasets[d]) << "</text>\n";
  }
  std::snprintf(buf, sizeof(buf),
                "<text x=\"16\" y=\"%.1f\" transform=\"rotate(-90 16 %.1f)\" text-anchor=\"middle\">LPIPS (lower is "
                "better)</text>\n",
                top + plot_h / 2, top + plot_h / 2);
  s << buf << "</svg>\n";
  return s.str();
}

void emit_lpips_chart(const std::vector<TableEntry>& entries, const std::filesystem::path& out,
                      const std::string& title) {
  const auto svg = lpips_chart_svg(entries, title);
  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  std::ofstream f(out);
  if (!f) throw Error("cannot write " + out.string());
  f << svg;
}

}  // namespace dpsr
