#include <cstdint>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <qgraph/commands.hpp>
#include <qgraph/config.hpp>
#include <qgraph/errors.hpp>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantum graph spectra, level spacings, and section statistics"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = ".";
  std::string cache_dir;
  std::vector<std::uint64_t> seeds;
  bool no_cache = false;

  app.add_option("--config", config_path, "Run configuration (JSON)")->required();
  app.add_option("--out", out_dir, "Output directory (default: current directory)");
  app.add_option("--seed", seeds, "RNG seed; repeatable, overrides config seeds");
  app.add_option("--cache", cache_dir, "Spectrum cache directory (default: <out>/cache)");
  app.add_flag("--no-cache", no_cache, "Disable the spectrum cache");

  const char* names[] = {"spectrum", "spacings", "compare", "sheets", "analytic", "returns"};
  const char* briefs[] = {"Compute (or load cached) eigenvalue levels",
                          "Unfolded nearest-neighbor spacings, histogram, CDF, slope fit",
                          "KS distances and deviation curves against reference models",
                          "Sheet counts and the sheet sum rule",
                          "Sample an analytic spacing model on a grid",
                          "Torus first-return sampling and 2D section quadrature"};
  for (std::size_t i = 0; i < 6; ++i) app.add_subcommand(names[i], briefs[i])->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const qgraph::RunConfig cfg = qgraph::load_config(config_path);
    qgraph::CommandOptions opts;
    opts.out_dir = out_dir == "." && cfg.output_directory != "." ? cfg.output_directory
                                                                 : out_dir;
    if (!cache_dir.empty()) opts.cache_dir = cache_dir;
    opts.use_cache = !no_cache;
    opts.seed_overrides = seeds;

    const qgraph::ResultBundle bundle = qgraph::run_command(command, cfg, opts);
    std::cout << bundle.summary.dump(2) << "\n";
    return kExitOk;
  } catch (const qgraph::ConfigError& e) {
    std::cerr << command << ": config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const qgraph::Error& e) {
    std::cerr << command << ": " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << command << ": " << e.what() << "\n";
    return kExitNumerical;
  }
}
