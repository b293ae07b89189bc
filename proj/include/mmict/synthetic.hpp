#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mmict/demo_former.hpp"

namespace mmict {

enum class Task { Describe, IclMap, Qa };
std::string_view to_string(Task t);
Task parse_task(std::string_view name);
TaskKind task_kind(Task t);

struct SyntheticSpec {
  Task task = Task::Describe;
  std::size_t n_train = 2000;
  std::size_t n_val = 200;
  std::size_t n_test = 500;
  std::size_t n_f = 16;
  std::size_t grid = 4;
  std::uint64_t seed = 1;
};

struct Splits {
  std::vector<Sample> train;
  std::vector<Sample> val;
  std::vector<Sample> test;
};

// icl-map groups hold this many samples: 4 train, 1 val, 1 test.
inline constexpr std::size_t kMapGroupSize = 6;

// Canonical caption of a set of object symbols: "a X and a Y ..." in
// ascending symbol order.
std::string describe_caption(std::vector<int> symbols);

// Disjoint train/val/test splits from one seed.
//  describe: 2-4 distinct objects per sample, each frame places them anew.
//  icl-map:  every group draws a hidden symbol -> color permutation; its
//            samples all show one focal symbol and pair it with that color.
//            The group count is n_train / 4 rounded up to a multiple of 8 so
//            colors are exactly balanced; val and test take one per group.
//  qa:       2-4 objects in distinct quadrants, a question about one of them.
Splits gen_synthetic(const SyntheticSpec& spec);

}  // namespace mmict
