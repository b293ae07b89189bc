#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mmict/autograd.hpp"
#include "mmict/demo_former.hpp"

namespace mmict {

// Writes to a sibling temporary file, then renames over the target.
void atomic_write(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

// One JSON object per line: id, group_id, frames (grid x grid nested
// arrays), text, label, question (omitted when empty).
std::string sample_to_json(const Sample& s);
Sample sample_from_json(std::string_view line);
std::string serialize_dataset(std::span<const Sample> samples);
std::vector<Sample> parse_dataset(std::string_view content);
void write_dataset(const std::filesystem::path& path, std::span<const Sample> samples);
std::vector<Sample> read_dataset(const std::filesystem::path& path);

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  int version = kCheckpointVersion;
  std::vector<std::pair<std::string, std::string>> config;  // echo of the run configuration
  std::vector<std::pair<std::string, Tensor>> params;
};

// Text container: header, config echo, hexfloat parameter values and a
// trailing SHA-256 of everything before it.
std::string serialize_checkpoint(const Checkpoint& c);
Checkpoint parse_checkpoint(std::string_view content);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint capture(std::span<Parameter* const> params, std::vector<std::pair<std::string, std::string>> config = {});
// Copies values into params by name; every parameter must be present with
// a matching shape.
void restore(const Checkpoint& c, std::span<Parameter* const> params);

}  // namespace mmict
