#include "mmict/io.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <unordered_set>

#include "mmict/digest.hpp"
#include "mmict/errors.hpp"

namespace mmict {

namespace fs = std::filesystem;
using nlohmann::json;

void atomic_write(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + tmp.string() + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error("write to '" + tmp.string() + "' failed");
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string sample_to_json(const Sample& s) {
  json frames = json::array();
  for (const Frame& f : s.frames) {
    json grid = json::array();
    for (std::size_t r = 0; r < f.grid; ++r) {
      json row = json::array();
      for (std::size_t c = 0; c < f.grid; ++c) row.push_back(f.cells.at(r * f.grid + c));
      grid.push_back(std::move(row));
    }
    frames.push_back(std::move(grid));
  }
  json j = {{"id", s.id}, {"group_id", s.group_id}, {"frames", std::move(frames)}, {"text", s.text},
            {"label", s.label}};
  if (!s.question.empty()) j["question"] = s.question;
  return j.dump();
}

Sample sample_from_json(std::string_view line) {
  try {
    const json j = json::parse(line);
    Sample s;
    s.id = j.at("id").get<std::string>();
    s.group_id = j.at("group_id").get<std::string>();
    s.text = j.at("text").get<std::string>();
    s.label = j.at("label").get<std::string>();
    s.question = j.value("question", std::string());
    for (const json& grid : j.at("frames")) {
      Frame f;
      f.grid = grid.size();
      for (const json& row : grid) {
        if (row.size() != f.grid) throw FormatError("frame of sample '" + s.id + "' is not square");
        for (const json& cell : row) f.cells.push_back(cell.get<int>());
      }
      s.frames.push_back(std::move(f));
    }
    if (s.frames.empty()) throw FormatError("sample '" + s.id + "' has no frames");
    return s;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed sample record: ") + e.what());
  }
}

std::string serialize_dataset(std::span<const Sample> samples) {
  std::string out;
  for (const Sample& s : samples) {
    out += sample_to_json(s);
    out += '\n';
  }
  return out;
}

std::vector<Sample> parse_dataset(std::string_view content) {
  std::vector<Sample> out;
  std::unordered_set<std::string> ids;
  std::size_t line_no = 0;
  while (!content.empty()) {
    const std::size_t nl = content.find('\n');
    const std::string_view line = content.substr(0, nl);
    content = nl == std::string_view::npos ? std::string_view{} : content.substr(nl + 1);
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    Sample s;
    try {
      s = sample_from_json(line);
    } catch (const FormatError& e) {
      throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!ids.insert(s.id).second) throw FormatError("duplicate sample id '" + s.id + "'");
    out.push_back(std::move(s));
  }
  return out;
}

void write_dataset(const fs::path& path, std::span<const Sample> samples) {
  atomic_write(path, serialize_dataset(samples));
}

std::vector<Sample> read_dataset(const fs::path& path) {
  try {
    return parse_dataset(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

namespace {

constexpr std::string_view kMagic = "mmict-checkpoint";

std::string hexfloat(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double parse_double(const std::string& tok) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0' || errno == ERANGE) throw FormatError("bad number '" + tok + "'");
  return v;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& c) {
  std::string body;
  body += std::string(kMagic) + " " + std::to_string(c.version) + "\n";
  body += "config " + std::to_string(c.config.size()) + "\n";
  for (const auto& [k, v] : c.config) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw ContractError("checkpoint: config entry '" + k + "' cannot be serialized");
    }
    body += k + "=" + v + "\n";
  }
  body += "params " + std::to_string(c.params.size()) + "\n";
  for (const auto& [name, t] : c.params) {
    body += "param " + name + " " + std::to_string(t.shape().size());
    for (std::size_t d : t.shape()) body += " " + std::to_string(d);
    body += "\n";
    const auto vals = t.values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      if (i) body += ' ';
      body += hexfloat(vals[i]);
    }
    body += "\n";
  }
  return body + "sha256 " + sha256_hex(body) + "\n";
}

Checkpoint parse_checkpoint(std::string_view content) {
  const std::size_t hash_at = content.rfind("sha256 ");
  if (hash_at == std::string_view::npos || (hash_at > 0 && content[hash_at - 1] != '\n')) {
    throw FormatError("checkpoint: missing content hash");
  }
  const std::string_view body = content.substr(0, hash_at);
  std::string stored(content.substr(hash_at + 7));
  while (!stored.empty() && (stored.back() == '\n' || stored.back() == '\r')) stored.pop_back();
  if (sha256_hex(body) != stored) throw FormatError("checkpoint: content hash mismatch (file corrupted)");

  std::istringstream in{std::string(body)};
  std::string magic;
  Checkpoint c;
  if (!(in >> magic >> c.version) || magic != kMagic) throw FormatError("checkpoint: bad header");
  if (c.version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(c.version));
  }
  std::string word;
  std::size_t n = 0;
  if (!(in >> word >> n) || word != "config") throw FormatError("checkpoint: missing config section");
  std::string line;
  std::getline(in, line);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw FormatError("checkpoint: truncated config section");
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("checkpoint: bad config line '" + line + "'");
    c.config.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  if (!(in >> word >> n) || word != "params") throw FormatError("checkpoint: missing params section");
  for (std::size_t i = 0; i < n; ++i) {
    std::string name;
    std::size_t rank = 0;
    if (!(in >> word >> name >> rank) || word != "param") throw FormatError("checkpoint: bad param header");
    Shape shape(rank);
    for (std::size_t& d : shape) {
      if (!(in >> d)) throw FormatError("checkpoint: bad shape for '" + name + "'");
    }
    std::vector<double> values(shape_size(shape));
    for (double& v : values) {
      std::string tok;
      if (!(in >> tok)) throw FormatError("checkpoint: truncated values for '" + name + "'");
      v = parse_double(tok);
    }
    c.params.emplace_back(name, Tensor(shape, std::move(values)));
  }
  return c;
}

void save_checkpoint(const fs::path& path, const Checkpoint& c) { atomic_write(path, serialize_checkpoint(c)); }

Checkpoint load_checkpoint(const fs::path& path) {
  try {
    return parse_checkpoint(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

Checkpoint capture(std::span<Parameter* const> params, std::vector<std::pair<std::string, std::string>> config) {
  Checkpoint c;
  c.config = std::move(config);
  for (const Parameter* p : params) c.params.emplace_back(p->name, p->value);
  return c;
}

void restore(const Checkpoint& c, std::span<Parameter* const> params) {
  std::unordered_map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : c.params) by_name.emplace(name, &t);
  for (Parameter* p : params) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) throw FormatError("checkpoint: parameter '" + p->name + "' missing");
    if (it->second->shape() != p->value.shape()) {
      throw ShapeError("checkpoint: parameter '" + p->name + "' has shape " + shape_to_string(it->second->shape()) +
                       ", model expects " + shape_to_string(p->value.shape()));
    }
    p->value = *it->second;
  }
}

}  // namespace mmict
