// Runs every acceptance criterion and prints one PASS/FAIL line each.
// Usage: acceptance [--list] [--only N[,N...]]

#include <chrono>
#include <cstdio>
#include <exception>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "acceptance/harness.hpp"
#include "plc/kernels.hpp"
#include "plc/training.hpp"

using namespace plc::acceptance;

namespace {

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all = {
      {1, "loss-function oracle suite", loss_oracles},
      {2, "gradient suite", gradients},
      {3, "causality suite", causality},
      {4, "masked-attention contract", masked_attention_contract},
      {5, "simulation statistics", simulation_statistics},
      {6, "stft/compression round trips and vocoder length law", round_trips},
      {7, "fade policy", fade_policy},
      {8, "end-to-end overfit smoke test", overfit_smoke},
      {9, "freezing and persistence", freezing_and_persistence},
      {10, "metric properties", metric_properties},
  };
  return all;
}

std::set<int> parse_ids(const std::string& text) {
  std::set<int> ids;
  std::stringstream s(text);
  for (std::string item; std::getline(s, item, ',');) ids.insert(std::stoi(item));
  return ids;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--list") {
      for (const auto& c : criteria()) std::printf("%d %s\n", c.id, c.name);
      return 0;
    }
    if (arg == "--only" && i + 1 < argc) {
      try {
        only = parse_ids(argv[++i]);
      } catch (const std::exception&) {
        std::fprintf(stderr, "acceptance: bad --only list\n");
        return 2;
      }
      continue;
    }
    std::fprintf(stderr, "usage: acceptance [--list] [--only N[,N...]]\n");
    return 2;
  }

  plc::kernels::set_num_workers(plc::configured_workers());
  int failures = 0, ran = 0;
  for (const auto& c : criteria()) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s [%d] %s (%.1f s): %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, secs, o.detail.c_str());
    std::fflush(stdout);
    failures += !o.pass;
    ++ran;
  }
  std::printf("%d of %d criteria passed\n", ran - failures, ran);
  return failures == 0 ? 0 : 1;
}
