// smallball-lab: run experiment configs, validate them, and plot result CSVs.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "smallball/errors.hpp"
#include "smallball/lab.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitTruncation = 3;

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw sbl::ConfigError(path.string(), "cannot open for writing");
  out << content;
  if (!out) throw sbl::ConfigError(path.string(), "write failed");
}

std::vector<std::string> split_columns(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Small-ball probabilities of tensor-product Gaussian fields"};
  app.set_version_flag("--version", std::string(sbl::lab::kVersion));
  app.require_subcommand(1);

  std::string config_path, out_dir;
  auto* run = app.add_subcommand("run", "Run an experiment config; writes results.csv and manifest.json");
  run->add_option("--config", config_path, "Experiment JSON")->required();
  run->add_option("--out", out_dir, "Output directory (default: the config's output_dir)");

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "Check a config without running it");
  validate->add_option("--config", validate_path, "Experiment JSON")->required();

  std::string csv_path, x_col, y_cols, svg_path, group_col;
  bool logx = false, logy = false;
  auto* plot = app.add_subcommand("plot", "Render result columns as an SVG line chart");
  plot->add_option("--csv", csv_path, "Input CSV")->required();
  plot->add_option("--x", x_col, "x column")->required();
  plot->add_option("--y", y_cols, "Comma-separated y columns")->required();
  plot->add_option("--out", svg_path, "Output SVG")->required();
  plot->add_option("--group", group_col, "Column splitting rows into separate series");
  plot->add_flag("--logx", logx, "Logarithmic x axis");
  plot->add_flag("--logy", logy, "Logarithmic y axis");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) {
      const auto config = sbl::lab::load_config(config_path);
      if (out_dir.empty()) out_dir = config.output_dir;
      if (out_dir.empty()) throw sbl::ConfigError("/output_dir", "no --out and no output_dir in the config");
      const auto result = sbl::lab::run_experiment(config);
      fs::create_directories(out_dir);
      write_file(fs::path(out_dir) / "results.csv", sbl::lab::format_csv(result.rows));
      write_file(fs::path(out_dir) / "manifest.json", result.manifest.dump(2) + "\n");
      std::printf("%zu rows written to %s\n", result.rows.size(), out_dir.c_str());
    } else if (*validate) {
      const auto config = sbl::lab::load_config(validate_path);
      std::printf("ok: %s (d = %d, %zu methods)\n", config.name.c_str(), config.tensor_order,
                  config.methods.size());
    } else if (*plot) {
      sbl::lab::PlotOptions opt;
      opt.x = x_col;
      opt.ys = split_columns(y_cols);
      opt.logx = logx;
      opt.logy = logy;
      opt.group = group_col;
      const auto svg = sbl::lab::render_svg(sbl::lab::read_csv(csv_path), opt);
      write_file(svg_path, svg);
    }
  } catch (const sbl::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const sbl::TruncationExhausted& e) {
    std::fprintf(stderr, "truncation exhausted: %s\n", e.what());
    return kExitTruncation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return kExitOk;
}
