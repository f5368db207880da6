// Runs a named benchmark suite and prints one tab-separated row per case.

#include <iostream>

#include <CLI11.hpp>

#include "../tests/acceptance/acceptance_suite.hpp"

int main(int argc, char** argv) {
  CLI::App app{"homelist benchmark runner"};
  app.require_subcommand(1);
  auto* run = app.add_subcommand("run", "run a suite");
  std::string suite_name = "acceptance";
  unsigned workers = 1;
  run->add_option("--suite", suite_name, "acceptance or empty");
  run->add_option("--workers", workers, "cases run concurrently")->check(CLI::PositiveNumber);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    const auto results = acceptance::run_suite(acceptance::suite(suite_name), workers);
    acceptance::print_report(std::cout, results);
    return acceptance::all_passed(results) ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
