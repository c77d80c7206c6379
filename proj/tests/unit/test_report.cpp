#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "dpsr/errors.hpp"
#include "dpsr/report.hpp"
#include "support.hpp"

using namespace dpsr;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("ranking respects metric direction") {
  const std::vector<TableEntry> entries = {
      {"A", "Set5", 30.0, 0.90, 0.20},
      {"B", "Set5", 31.0, 0.85, 0.10},
      {"C", "Set5", 29.0, 0.88, 0.15},
      {"A", "Urban", 25.0, 0.70, std::nullopt},
  };
  const auto r = rank_entries(entries);
  CHECK(r[1].psnr == Rank::best);
  CHECK(r[0].psnr == Rank::second);
  CHECK(r[2].psnr == Rank::none);
  CHECK(r[0].ssim == Rank::best);
  CHECK(r[2].ssim == Rank::second);
  CHECK(r[1].lpips == Rank::best);  // lower is better
  CHECK(r[2].lpips == Rank::second);
  CHECK(r[0].lpips == Rank::none);
  // a dataset with a single method gets no marks
  CHECK(r[3].psnr == Rank::none);
  CHECK(r[3].lpips == Rank::none);
  CHECK(higher_is_better(Metric::psnr));
  CHECK_FALSE(higher_is_better(Metric::lpips));
}

TEST_CASE("ties share a rank") {
  const std::vector<TableEntry> entries = {
      {"A", "S", 30.0, 0.9, 0.1}, {"B", "S", 30.0, 0.9, 0.1}, {"C", "S", 29.0, 0.8, 0.2}};
  const auto r = rank_entries(entries);
  CHECK(r[0].psnr == Rank::best);
  CHECK(r[1].psnr == Rank::best);
  CHECK(r[2].psnr == Rank::second);
  CHECK(r[2].lpips == Rank::second);
  CHECK(rank_entries({{"only", "S", 1.0, 0.5, 0.3}})[0].psnr == Rank::none);
}

TEST_CASE("table files") {
  const auto dir = testing::scratch_dir("report");
  const std::vector<TableEntry> entries = {
      {"ESRGAN", "Set5", 30.123456789012345, 1.0 / 3.0, 0.1080},
      {"ESRGAN-DP", "Set5", 30.5, 0.8000639795, 0.0990},
      {"VGG", "Urban100", INFINITY, 0.5, std::nullopt},
  };
  const auto files = emit_comparison_table(entries, dir / "table");
  REQUIRE(files.size() == 2);
  CHECK((read_table_csv(dir / "table.csv") == entries));

  const auto text = slurp(dir / "table.txt");
  CHECK(text.find("0.0990(1)") != std::string::npos);
  CHECK(text.find("0.1080(2)") != std::string::npos);
  CHECK(text.find("30.50(1)") != std::string::npos);
  CHECK(text.find("NA") != std::string::npos);
  CHECK(text.find("Urban100") != std::string::npos);

  const auto csv = slurp(dir / "table.csv");
  CHECK(csv.rfind("method,dataset,psnr_db,ssim,lpips,psnr_rank,ssim_rank,lpips_rank\n", 0) == 0);
  CHECK(csv.find("ESRGAN-DP,Set5,30.5,0.80006397949999997,0.099000000000000005,best,best,best") !=
        std::string::npos);

  CHECK(emit_comparison_table(entries, dir / "only", TableFormat::csv).size() == 1);
  CHECK_FALSE(std::filesystem::exists(dir / "only.txt"));
  CHECK_THROWS_AS(emit_comparison_table({}, dir / "none"), ValidationError);
  CHECK_THROWS_AS(emit_comparison_table({{"a,b", "S", 1, 1, 1}}, dir / "comma"), ValidationError);
}

TEST_CASE("summary CSVs are accepted as table input") {
  const auto dir = testing::scratch_dir("summary");
  {
    std::ofstream out(dir / "ref.csv");
    out << "method,dataset,psnr_db,ssim,lpips,notes\nSRGAN,Set5,29.4,0.84,0.0882,published\nX,Set5,28,0.8,NA,\n";
  }
  const auto e = read_table_csv(dir / "ref.csv");
  REQUIRE(e.size() == 2);
  CHECK(e[0].lpips == 0.0882);
  CHECK_FALSE(e[1].lpips.has_value());
  {
    std::ofstream out(dir / "bad.csv");
    out << "name,psnr\n";
  }
  CHECK_THROWS_AS(read_table_csv(dir / "bad.csv"), LoadError);
}

TEST_CASE("LPIPS chart is deterministic") {
  const std::vector<TableEntry> entries = {{"ESRGAN", "Urban100", 24.0, 0.7, 0.123},
                                           {"ESRGAN-DP", "Urban100", 24.1, 0.71, 0.118},
                                           {"ESRGAN", "Set5", 30.0, 0.85, 0.108},
                                           {"noLP", "Set5", 30.0, 0.85, std::nullopt}};
  const auto svg = lpips_chart_svg(entries, "LPIPS on <Urban100>");
  CHECK(svg == lpips_chart_svg(entries, "LPIPS on <Urban100>"));
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("&lt;Urban100&gt;") != std::string::npos);
  CHECK(svg.find("<polyline") != std::string::npos);
  CHECK(svg.find("noLP") == std::string::npos);
  CHECK_THROWS_AS(lpips_chart_svg({{"a", "S", 1, 1, std::nullopt}}), ValidationError);

  const auto dir = testing::scratch_dir("chart");
  emit_lpips_chart(entries, dir / "lpips.svg", "LPIPS on <Urban100>");
  CHECK(slurp(dir / "lpips.svg") == svg);
}
