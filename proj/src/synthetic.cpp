#include "mmict/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "mmict/errors.hpp"
#include "mmict/lexicon.hpp"
#include "mmict/random.hpp"

namespace mmict {

std::string_view to_string(Task t) {
  switch (t) {
    case Task::Describe: return "describe";
    case Task::IclMap: return "icl-map";
    case Task::Qa: return "qa";
  }
  return "?";
}

Task parse_task(std::string_view name) {
  if (name == "describe") return Task::Describe;
  if (name == "icl-map") return Task::IclMap;
  if (name == "qa") return Task::Qa;
  throw UsageError("unknown task '" + std::string(name) + "' (expected describe, icl-map or qa)");
}

TaskKind task_kind(Task t) { return t == Task::Qa ? TaskKind::Qa : TaskKind::Caption; }

std::string describe_caption(std::vector<int> symbols) {
  std::sort(symbols.begin(), symbols.end());
  std::string out;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (i) out += " and ";
    out += "a ";
    out += lexicon::kObjects.at(static_cast<std::size_t>(symbols[i] - 1));
  }
  return out;
}

namespace {

constexpr int kNumObjects = static_cast<int>(lexicon::kObjects.size());

std::string make_id(Task task, std::string_view split, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", i);
  return std::string(to_string(task)) + "-" + std::string(split) + "-" + buf;
}

std::vector<int> pick_objects(Rng& rng) {
  std::vector<int> all(kNumObjects);
  std::iota(all.begin(), all.end(), 1);
  std::shuffle(all.begin(), all.end(), rng);
  const std::size_t k = std::uniform_int_distribution<std::size_t>(2, 4)(rng);
  all.resize(k);
  return all;
}

// Each object lands in a distinct random cell.
Frame scatter(const std::vector<int>& objects, std::size_t grid, Rng& rng) {
  Frame f{grid, std::vector<int>(grid * grid, 0)};
  std::vector<std::size_t> cells(grid * grid);
  std::iota(cells.begin(), cells.end(), std::size_t{0});
  std::shuffle(cells.begin(), cells.end(), rng);
  for (std::size_t i = 0; i < objects.size(); ++i) f.cells[cells[i]] = objects[i];
  return f;
}

Sample describe_sample(const SyntheticSpec& spec, std::string id, Rng& rng) {
  const std::vector<int> objects = pick_objects(rng);
  Sample s;
  s.id = id;
  s.group_id = std::move(id);
  for (std::size_t f = 0; f < spec.n_f; ++f) s.frames.push_back(scatter(objects, spec.grid, rng));
  s.label = describe_caption(objects);
  s.text = s.label;
  return s;
}

Sample qa_sample(const SyntheticSpec& spec, std::string id, Rng& rng) {
  if (spec.grid < 2 || spec.grid % 2 != 0) throw ContractError("qa: grid must be even");
  const std::vector<int> objects = pick_objects(rng);
  std::vector<std::size_t> quadrants = {0, 1, 2, 3};
  std::shuffle(quadrants.begin(), quadrants.end(), rng);
  const std::size_t half = spec.grid / 2;
  Sample s;
  s.id = id;
  s.group_id = std::move(id);
  for (std::size_t f = 0; f < spec.n_f; ++f) {
    Frame fr{spec.grid, std::vector<int>(spec.grid * spec.grid, 0)};
    for (std::size_t i = 0; i < objects.size(); ++i) {
      const std::size_t q = quadrants[i];
      const std::size_t r = (q / 2) * half + std::uniform_int_distribution<std::size_t>(0, half - 1)(rng);
      const std::size_t c = (q % 2) * half + std::uniform_int_distribution<std::size_t>(0, half - 1)(rng);
      fr.cells[r * spec.grid + c] = objects[i];
    }
    s.frames.push_back(std::move(fr));
  }
  const std::size_t asked = std::uniform_int_distribution<std::size_t>(0, objects.size() - 1)(rng);
  const std::size_t q = quadrants[asked];
  s.question = "what is in the " + std::string(lexicon::kRowWords[q / 2]) + " " +
               std::string(lexicon::kColWords[q % 2]);
  s.label = std::string(lexicon::kObjects[static_cast<std::size_t>(objects[asked] - 1)]);
  s.text = std::string(lexicon::kQuestionPrefix) + " " + s.question + " " + std::string(lexicon::kAnswerMarker) +
           " " + s.label;
  return s;
}

void independent_splits(const SyntheticSpec& spec, Splits& out) {
  const std::uint64_t base = derive_seed(spec.seed, to_string(spec.task));
  auto fill = [&](std::vector<Sample>& dst, std::string_view split, std::size_t n) {
    const std::uint64_t split_seed = derive_seed(base, split);
    for (std::size_t i = 0; i < n; ++i) {
      Rng rng(derive_seed(split_seed, static_cast<std::uint64_t>(i)));
      std::string id = make_id(spec.task, split, i);
      dst.push_back(spec.task == Task::Qa ? qa_sample(spec, std::move(id), rng)
                                          : describe_sample(spec, std::move(id), rng));
    }
  };
  fill(out.train, "train", spec.n_train);
  fill(out.val, "val", spec.n_val);
  fill(out.test, "test", spec.n_test);
}

void map_splits(const SyntheticSpec& spec, Splits& out) {
  const std::size_t colors = lexicon::kColors.size();
  std::size_t groups = (spec.n_train + 3) / 4;
  groups = (groups + colors - 1) / colors * colors;
  const std::uint64_t base = derive_seed(spec.seed, to_string(spec.task));
  std::size_t next[3] = {0, 0, 0};
  for (std::size_t g = 0; g < groups; ++g) {
    Rng rng(derive_seed(base, static_cast<std::uint64_t>(g)));
    std::vector<std::size_t> perm(colors);  // symbol s (1-based) -> color perm[s-1]
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    const std::size_t word = g % colors;
    const int focal = static_cast<int>(std::find(perm.begin(), perm.end(), word) - perm.begin()) + 1;
    char gid[32];
    std::snprintf(gid, sizeof gid, "icl-map-g%05zu", g);

    std::vector<std::size_t> phrasing(kMapGroupSize);
    std::iota(phrasing.begin(), phrasing.end(), std::size_t{0});
    std::shuffle(phrasing.begin(), phrasing.end(), rng);
    for (std::size_t k = 0; k < kMapGroupSize; ++k) {
      const std::size_t split = k < 4 ? 0 : k - 3;  // 4 train, 1 val, 1 test
      Sample s;
      s.group_id = gid;
      for (std::size_t f = 0; f < spec.n_f; ++f) s.frames.push_back(scatter({focal}, spec.grid, rng));
      s.label = std::string(lexicon::kColors[word]);
      s.text = std::string(lexicon::kMapPhrasings[phrasing[k]]) + " " + s.label;
      static constexpr std::string_view kSplitNames[] = {"train", "val", "test"};
      s.id = make_id(spec.task, kSplitNames[split], next[split]++);
      (split == 0 ? out.train : split == 1 ? out.val : out.test).push_back(std::move(s));
    }
  }
}

}  // namespace

Splits gen_synthetic(const SyntheticSpec& spec) {
  if (spec.n_f < 1) throw ContractError("gen_synthetic: n_f must be >= 1");
  if (spec.grid < 2) throw ContractError("gen_synthetic: grid must be >= 2");
  Splits out;
  if (spec.task == Task::IclMap) {
    map_splits(spec, out);
  } else {
    independent_splits(spec, out);
  }
  return out;
}

}  // namespace mmict
