#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dpsr/metrics.hpp"

namespace dpsr {

// One method evaluated on one dataset.
struct TableEntry {
  std::string method;
  std::string dataset;
  double psnr_db = 0.0;
  double ssim = 0.0;
  std::optional<double> lpips;

  static TableEntry from_report(std::string method, std::string dataset, const MetricReport& report);
  bool operator==(const TableEntry&) const = default;
};

enum class Rank { none, best, second };
enum class Metric { psnr, ssim, lpips };

// PSNR and SSIM are higher-better, LPIPS lower-better.
bool higher_is_better(Metric metric);

struct RankedEntry {
  TableEntry entry;
  Rank psnr = Rank::none;
  Rank ssim = Rank::none;
  Rank lpips = Rank::none;
};

// Ranks every (dataset, metric) column among the methods that report it.
// Equal values share a rank, so a tie for first marks every tied row best
// and the next distinct value second. Columns with fewer than two values get
// no marks.
std::vector<RankedEntry> rank_entries(const std::vector<TableEntry>& entries);

enum class TableFormat { csv, text, both };

// CSV: method,dataset,psnr_db,ssim,lpips,psnr_rank,ssim_rank,lpips_rank with
// 17 significant digits. Text: one row per method, one column group per
// dataset; best values carry "(1)", second-best "(2)". Returns the written
// files (<out_prefix>.csv and/or <out_prefix>.txt).
std::vector<std::filesystem::path> emit_comparison_table(const std::vector<TableEntry>& entries,
                                                         const std::filesystem::path& out_prefix,
                                                         TableFormat format = TableFormat::both);

std::string format_text_table(const std::vector<RankedEntry>& ranked);

// Reads either a table CSV written above or a summary CSV with the leading
// method,dataset,psnr_db,ssim,lpips columns (extra columns ignored).
std::vector<TableEntry> read_table_csv(const std::filesystem::path& path);

// SVG line chart of LPIPS: methods along x, one polyline per dataset.
// Entries without LPIPS are skipped; throws if none remain. Output is a pure
// function of the entries.
std::string lpips_chart_svg(const std::vector<TableEntry>& entries, const std::string& title = "LPIPS");
void emit_lpips_chart(const std::vector<TableEntry>& entries, const std::filesystem::path& out,
                      const std::string& title = "LPIPS");

}  // namespace dpsr
