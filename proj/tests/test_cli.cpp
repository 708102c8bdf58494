// Configuration schema, CSV formats, spectrum cache, command plumbing, and an
// end-to-end pass over the installed command-line binary.
#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qgraph/commands.hpp"
#include "qgraph/config.hpp"
#include "qgraph/csv.hpp"
#include "qgraph/errors.hpp"

using namespace qgraph;
using Catch::Matchers::ContainsSubstring;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path make_temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "qgraph_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

json star3_json(std::size_t levels) {
  return json{
      {"version", 1},
      {"graph",
       {{"kind", "star"},
        {"lengths", {std::numbers::pi, 3.183459012, 3.1442336073}}}},
      {"solver", {{"levels", levels}}},
  };
}

// Split a CSV body into lines (without the trailing newline characters).
std::vector<std::string> lines_of(const std::string& body) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < body.size()) {
    const std::size_t end = body.find('\n', start);
    out.push_back(body.substr(start, end - start));
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return out;
}

std::pair<double, double> parse_row(const std::string& line) {
  const std::size_t comma = line.find(',');
  REQUIRE(comma != std::string::npos);
  return {std::strtod(line.c_str(), nullptr),
          std::strtod(line.c_str() + comma + 1, nullptr)};
}

}  // namespace

TEST_CASE("number formatting round-trips doubles exactly") {
  const double values[] = {std::numbers::pi, 1.0 / 3.0,      1e-17,
                           6.02214076e23,    0.1,             -1.2345678901234567e-5,
                           0.0,              1.0,             123456789.875,
                           2.2250738585072014e-308};
  for (double v : values) {
    const std::string s = format_number(v);
    const double back = std::strtod(s.c_str(), nullptr);
    REQUIRE(back == v);
  }
  CHECK(format_number(1.0) == "1");
  CHECK(format_number(0.5) == "0.5");
}

TEST_CASE("hash matches the reference vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(hex64(0xcbf29ce484222325ULL) == "cbf29ce484222325");
  CHECK(hex64(0) == "0000000000000000");
  CHECK(fnv1a64("abc") != fnv1a64("acb"));
}

TEST_CASE("spectrum CSV round-trips and parses strictly") {
  const std::vector<double> ks = {0.5, std::numbers::pi, 17.123456789012345};
  const std::string body = spectrum_csv(ks);
  CHECK(body.rfind("index,k\n", 0) == 0);
  CHECK(body.back() == '\n');
  CHECK(body.find('\r') == std::string::npos);

  const auto parsed = parse_spectrum_csv(body);
  REQUIRE(parsed.has_value());
  REQUIRE(parsed->size() == ks.size());
  for (std::size_t i = 0; i < ks.size(); ++i) REQUIRE((*parsed)[i] == ks[i]);

  SECTION("comment lines are skipped") {
    const std::string annotated = "index,k\n# produced by a test\n1,0.5\n";
    const auto ok = parse_spectrum_csv(annotated);
    REQUIRE(ok.has_value());
    CHECK(ok->size() == 1);
  }
  SECTION("missing trailing newline rejects") {
    CHECK_FALSE(parse_spectrum_csv("index,k\n1,0.5").has_value());
  }
  SECTION("wrong header rejects") {
    CHECK_FALSE(parse_spectrum_csv("k,index\n1,0.5\n").has_value());
  }
  SECTION("non-sequential index rejects") {
    CHECK_FALSE(parse_spectrum_csv("index,k\n1,0.5\n3,0.7\n").has_value());
  }
  SECTION("garbage numbers reject") {
    CHECK_FALSE(parse_spectrum_csv("index,k\n1,zebra\n").has_value());
  }
}

TEST_CASE("distribution CSV carries headers and the peak comment") {
  const std::vector<std::pair<double, double>> rows = {{0.0, 0.0}, {0.5, 0.25}};
  const std::string cdf = distribution_csv(rows, true, std::pair{2.0, 0.125});
  CHECK(cdf.rfind("delta,cdf\n", 0) == 0);
  CHECK_THAT(cdf, ContainsSubstring("# peak,2,0.125\n"));
  const std::string density = distribution_csv(rows, false);
  CHECK(density.rfind("delta,density\n", 0) == 0);
  CHECK(density.find("# peak") == std::string::npos);
  CHECK(deviation_csv(rows).rfind("delta,deviation\n", 0) == 0);
  CHECK(spacing_csv({0.5, 1.5}).rfind("index,delta\n", 0) == 0);
}

TEST_CASE("config parsing names the offending field") {
  auto parse = [](json j) { return parse_config(j); };
  CHECK_THROWS_MATCHES(parse(json::array()), ConfigError,
                       Catch::Matchers::MessageMatches(ContainsSubstring("top level")));
  CHECK_THROWS_MATCHES(parse(json{{"graph", {{"kind", "star"}}}}), ConfigError,
                       Catch::Matchers::MessageMatches(ContainsSubstring("version")));
  CHECK_THROWS_MATCHES(parse(json{{"version", 2}}), ConfigError,
                       Catch::Matchers::MessageMatches(ContainsSubstring("version")));
  CHECK_THROWS_MATCHES(parse(json{{"version", 1}}), ConfigError,
                       Catch::Matchers::MessageMatches(ContainsSubstring("graph")));

  json cfg = star3_json(16);
  SECTION("unknown graph constructor") {
    cfg["graph"]["kind"] = "hexagon";
    CHECK_THROWS_MATCHES(parse(cfg), ConfigError,
                         Catch::Matchers::MessageMatches(ContainsSubstring("graph.kind")));
  }
  SECTION("orphan k_min") {
    cfg["solver"] = json{{"k_min", 1.0}};
    CHECK_THROWS_MATCHES(
        parse(cfg), ConfigError,
        Catch::Matchers::MessageMatches(ContainsSubstring("k_min and k_max")));
  }
  SECTION("range and level count together") {
    cfg["solver"] = json{{"k_min", 1.0}, {"k_max", 5.0}, {"levels", 7}};
    CHECK_THROWS_MATCHES(parse(cfg), ConfigError,
                         Catch::Matchers::MessageMatches(ContainsSubstring("not both")));
  }
  SECTION("unknown reference model") {
    cfg["stats"] = json{{"references", {"gue"}}};
    CHECK_THROWS_MATCHES(
        parse(cfg), ConfigError,
        Catch::Matchers::MessageMatches(ContainsSubstring("stats.references")));
  }
  SECTION("unknown field anywhere") {
    cfg["solver"]["oversampel"] = 8;
    CHECK_THROWS_MATCHES(parse(cfg), ConfigError,
                         Catch::Matchers::MessageMatches(ContainsSubstring("oversampel")));
  }
  SECTION("bad boundary") {
    cfg["graph"]["boundary"] = "robin";
    CHECK_THROWS_MATCHES(
        parse(cfg), ConfigError,
        Catch::Matchers::MessageMatches(ContainsSubstring("graph.boundary")));
  }
  SECTION("invalid lengths surface as config errors") {
    cfg["graph"]["lengths"] = {1.0, -2.0, 1.5};
    CHECK_THROWS_AS(parse(cfg), ConfigError);
  }
}

TEST_CASE("config builds the documented graph constructors") {
  json cfg = star3_json(16);
  const RunConfig star = parse_config(cfg);
  CHECK(star.graph.kind == "star");
  CHECK(star.build_graph().bonds().size() == 3);
  CHECK(star.solver.levels.value() == 16);

  cfg["graph"] = json{{"kind", "figure_eight"}, {"lengths", {1.5, 2.5}}};
  const MetricGraph f8 = parse_config(cfg).build_graph();
  CHECK(f8.bonds().size() == 2);
  CHECK(f8.bonds()[0].is_loop());

  cfg["graph"] = json{{"kind", "bonds"},
                      {"vertices", 2},
                      {"bonds", {{0, 1, std::numbers::pi}}}};
  const MetricGraph wire = parse_config(cfg).build_graph();
  CHECK(wire.bonds().size() == 1);
  CHECK(wire.total_length() == Catch::Approx(std::numbers::pi));
}

TEST_CASE("cache key tracks physical inputs only") {
  const RunConfig base = parse_config(star3_json(64));
  const std::string key0 = base.spectrum_cache_key();
  CHECK(key0.size() == 16);

  json j = star3_json(64);
  j["graph"]["lengths"][1] = 3.1834590121;  // tiny length change
  CHECK(parse_config(j).spectrum_cache_key() != key0);

  j = star3_json(64);
  j["graph"]["boundary"] = "dirichlet";
  CHECK(parse_config(j).spectrum_cache_key() != key0);

  j = star3_json(65);
  CHECK(parse_config(j).spectrum_cache_key() != key0);

  j = star3_json(64);
  j["solver"]["oversample"] = 12;
  CHECK(parse_config(j).spectrum_cache_key() != key0);

  j = star3_json(64);
  j["solver"]["integrable"] = true;
  CHECK(parse_config(j).spectrum_cache_key() != key0);

  // Statistics and output settings do not touch the spectrum.
  j = star3_json(64);
  j["stats"] = json{{"bin_width", 0.1}};
  j["output"] = json{{"directory", "elsewhere"}};
  CHECK(parse_config(j).spectrum_cache_key() == key0);
}

TEST_CASE("spectrum command reruns byte-identically and survives cache damage") {
  const RunConfig cfg = parse_config(star3_json(48));
  const fs::path dir_a = make_temp_dir("bytes_a");
  const fs::path dir_b = make_temp_dir("bytes_b");

  CommandOptions opts_a;
  opts_a.out_dir = dir_a;
  const ResultBundle first = cmd_spectrum(cfg, opts_a);
  CHECK(first.summary.at("cache_hit") == false);
  CHECK(first.summary.at("level_count") == 48);
  const std::string bytes_a = read_text_file(dir_a / "spectrum.csv");

  CommandOptions opts_b;
  opts_b.out_dir = dir_b;
  cmd_spectrum(cfg, opts_b);
  CHECK(read_text_file(dir_b / "spectrum.csv") == bytes_a);

  // Second run in the same directory hits the cache and keeps the bytes.
  const ResultBundle again = cmd_spectrum(cfg, opts_a);
  CHECK(again.summary.at("cache_hit") == true);
  CHECK(read_text_file(dir_a / "spectrum.csv") == bytes_a);

  // Tamper with the cached spectrum: the integrity sidecar must catch it.
  const fs::path cached =
      dir_a / "cache" / ("spectrum_" + cfg.spectrum_cache_key() + ".csv");
  REQUIRE(fs::exists(cached));
  std::string damaged = read_text_file(cached);
  const std::size_t digit = damaged.find_last_of("0123456789");
  damaged[digit] = damaged[digit] == '7' ? '8' : '7';
  write_text_file(cached, damaged);

  const ResultBundle healed = cmd_spectrum(cfg, opts_a);
  CHECK(healed.summary.at("cache_hit") == false);
  CHECK(read_text_file(dir_a / "spectrum.csv") == bytes_a);
  // ... and the repaired cache works on the next pass.
  CHECK(cmd_spectrum(cfg, opts_a).summary.at("cache_hit") == true);

  SECTION("disabling the cache skips it entirely") {
    const fs::path dir_c = make_temp_dir("bytes_c");
    CommandOptions opts_c;
    opts_c.out_dir = dir_c;
    opts_c.use_cache = false;
    cmd_spectrum(cfg, opts_c);
    CHECK_FALSE(fs::exists(dir_c / "cache"));
    CHECK(read_text_file(dir_c / "spectrum.csv") == bytes_a);
  }
}

TEST_CASE("hard-wall boundary routes through the decoupled generator") {
  json j = star3_json(10);
  j["graph"] = json{{"kind", "bonds"},
                    {"vertices", 2},
                    {"bonds", {{0, 1, std::numbers::pi}}},
                    {"boundary", "dirichlet"}};
  const RunConfig cfg = parse_config(j);
  const fs::path dir = make_temp_dir("dirichlet");
  CommandOptions opts;
  opts.out_dir = dir;
  cmd_spectrum(cfg, opts);
  const auto ks = parse_spectrum_csv(read_text_file(dir / "spectrum.csv"));
  REQUIRE(ks.has_value());
  REQUIRE(ks->size() == 10);
  for (std::size_t m = 0; m < ks->size(); ++m)
    REQUIRE((*ks)[m] == Catch::Approx(static_cast<double>(m + 1)).margin(1e-12));
}

TEST_CASE("spacings and compare emit the documented artifacts") {
  json j = star3_json(1200);
  j["stats"] = json{{"references", {"poisson", "wigner"}}};
  const RunConfig cfg = parse_config(j);
  const fs::path dir = make_temp_dir("artifacts");
  CommandOptions opts;
  opts.out_dir = dir;

  const ResultBundle spaced = cmd_spacings(cfg, opts);
  CHECK(fs::exists(dir / "spectrum.csv"));
  CHECK(fs::exists(dir / "spacings.csv"));
  CHECK(fs::exists(dir / "spacings_cdf.csv"));
  CHECK(fs::exists(dir / "spacings_density.csv"));
  CHECK(fs::exists(dir / "summary.json"));
  CHECK(spaced.summary.at("spacing_count") == 1199);
  CHECK(spaced.summary.contains("slope_fit"));
  CHECK(read_text_file(dir / "spacings.csv").rfind("index,delta\n", 0) == 0);

  const ResultBundle compared = cmd_compare(cfg, opts);
  const double d_poisson = compared.summary.at("ks_distance").at("poisson");
  const double d_wigner = compared.summary.at("ks_distance").at("wigner");
  // Both reference distances are genuine sup-norm gaps in (0, 1); the star
  // law matches neither reference, so neither distance collapses to zero.
  CHECK(d_poisson > 0.01);
  CHECK(d_poisson < 1.0);
  CHECK(d_wigner > 0.01);
  CHECK(d_wigner < 1.0);
  CHECK(read_text_file(dir / "deviation_poisson.csv").rfind("delta,deviation\n", 0) == 0);
  CHECK(fs::exists(dir / "deviation_wigner.csv"));
}

TEST_CASE("analytic command writes the law on the requested grid") {
  json j = star3_json(16);
  j["analytic"] = json{{"model", "figure8"}};
  const fs::path dir = make_temp_dir("analytic");
  CommandOptions opts;
  opts.out_dir = dir;

  const ResultBundle flat = cmd_analytic(parse_config(j), opts);
  CHECK(flat.summary.at("normalization").get<double>() == Catch::Approx(1.0).margin(1e-9));
  CHECK(flat.summary.at("mean").get<double>() == Catch::Approx(1.0).margin(1e-9));
  const auto rows = lines_of(read_text_file(dir / "analytic_density.csv"));
  REQUIRE(rows.size() >= 201);
  CHECK(rows[0] == "delta,density");
  const auto [x, y] = parse_row(rows[51]);  // grid point 50 of step 0.01
  CHECK(x == Catch::Approx(0.5).margin(1e-12));
  CHECK(y == Catch::Approx(0.5).margin(1e-12));  // flat law of the double loop

  j["analytic"] = json{{"model", "integrable"},
                       {"lengths", {2.0, 3.0, 4.5}}};
  const ResultBundle atom = cmd_analytic(parse_config(j), opts);
  CHECK(atom.summary.contains("peak_position"));
  const std::string density = read_text_file(dir / "analytic_density.csv");
  CHECK_THAT(density, ContainsSubstring("# peak,"));
  const double pos = atom.summary.at("peak_position");
  CHECK(pos == Catch::Approx((2.0 + 3.0 + 4.5) / 4.5).margin(1e-12));
}

TEST_CASE("command dispatch and seed resolution") {
  const RunConfig cfg = parse_config(star3_json(16));
  CommandOptions opts;
  opts.out_dir = make_temp_dir("dispatch");
  CHECK_THROWS_AS(run_command("frobnicate", cfg, opts), ConfigError);

  RunConfig seeded = cfg;
  seeded.seeds = {5};
  CommandOptions with_override;
  with_override.seed_overrides = {9, 11};
  CHECK(detail::effective_seeds(seeded, with_override) == std::vector<std::uint64_t>{9, 11});
  CHECK(detail::effective_seeds(seeded, opts) == std::vector<std::uint64_t>{5});
  CHECK(detail::effective_seeds(cfg, opts) == std::vector<std::uint64_t>{12345});
}

TEST_CASE("missing solver block fails the spectrum command cleanly") {
  json j = star3_json(16);
  j.erase("solver");
  const RunConfig cfg = parse_config(j);  // parse accepts: sheets/analytic need no solver
  CommandOptions opts;
  opts.out_dir = make_temp_dir("nosolver");
  CHECK_THROWS_AS(cmd_spectrum(cfg, opts), ConfigError);
}

#ifdef QGRAPH_CLI_PATH
namespace {

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + QGRAPH_CLI_PATH + "\" " + args + " > " +
                          log.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  REQUIRE(WIFEXITED(rc));
  return WEXITSTATUS(rc);
}

}  // namespace

TEST_CASE("command-line binary end to end") {
  const fs::path dir = make_temp_dir("binary");
  const fs::path log = dir / "run.log";
  const fs::path cfg_path = dir / "wire.json";
  json j{{"version", 1},
         {"graph",
          {{"kind", "bonds"}, {"vertices", 2}, {"bonds", {{0, 1, std::numbers::pi}}}}},
         {"solver", {{"levels", 25}}}};
  write_text_file(cfg_path, j.dump(2) + "\n");

  CHECK(run_cli("--help", log) == 0);
  CHECK(run_cli("spectrum --config " + cfg_path.string() + " --out " + dir.string(),
                log) == 0);
  const auto ks = parse_spectrum_csv(read_text_file(dir / "spectrum.csv"));
  REQUIRE(ks.has_value());
  REQUIRE(ks->size() == 25);
  for (std::size_t m = 0; m < ks->size(); ++m)
    REQUIRE((*ks)[m] == Catch::Approx(static_cast<double>(m + 1)).margin(1e-9));

  // Config failures exit 2: unreadable path, invalid JSON, unknown subcommand.
  CHECK(run_cli("spectrum --config " + (dir / "absent.json").string(), log) == 2);
  const fs::path broken = dir / "broken.json";
  write_text_file(broken, "{not json\n");
  CHECK(run_cli("spectrum --config " + broken.string(), log) == 2);
  CHECK(run_cli("frobnicate --config " + cfg_path.string(), log) == 2);
}
#endif
