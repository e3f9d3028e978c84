#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "podmix/error.hpp"

namespace podmix {

enum class Partition { kTrain, kValidation, kTest };
enum class SourceKind { kSpeech, kMusic };

inline constexpr Partition kAllPartitions[] = {Partition::kTrain,
                                               Partition::kValidation,
                                               Partition::kTest};

inline std::string_view to_string(Partition p) {
  switch (p) {
    case Partition::kTrain: return "train";
    case Partition::kValidation: return "validation";
    case Partition::kTest: return "test";
  }
  return "?";
}

inline Partition parse_partition(std::string_view text) {
  if (text == "train") return Partition::kTrain;
  if (text == "validation") return Partition::kValidation;
  if (text == "test") return Partition::kTest;
  throw Error(ErrorKind::kFormat, "unknown partition '" + std::string(text) + "'");
}

inline std::string_view to_string(SourceKind k) {
  return k == SourceKind::kSpeech ? "speech" : "music";
}

struct ManifestEntry {
  std::string id;
  std::string path;      // relative to SourceManifest::root
  std::string group_id;  // speaker or artist
  double duration_s = 0.0;
  std::optional<Partition> partition;
};

/// A list of source recordings of one kind. Partitions are assigned per group
/// so that no speaker or artist spans two partitions.
class SourceManifest {
 public:
  SourceManifest(SourceKind kind, std::vector<ManifestEntry> entries,
                 std::filesystem::path root = {})
      : kind_(kind), entries_(std::move(entries)), root_(std::move(root)) {
    validate();
  }

  SourceKind kind() const noexcept { return kind_; }
  const std::vector<ManifestEntry>& entries() const noexcept { return entries_; }
  const std::filesystem::path& root() const noexcept { return root_; }

  std::filesystem::path resolve(const ManifestEntry& entry) const {
    const std::filesystem::path p(entry.path);
    return p.is_absolute() ? p : root_ / p;
  }

  const ManifestEntry& find(std::string_view id) const {
    for (const auto& e : entries_) {
      if (e.id == id) return e;
    }
    throw Error(ErrorKind::kResolution,
                "entry '" + std::string(id) + "' not in " +
                    std::string(to_string(kind_)) + " manifest");
  }

  bool fully_partitioned() const {
    for (const auto& e : entries_) {
      if (!e.partition) return false;
    }
    return true;
  }

  /// Sorted group ids that have at least one entry in `partition`.
  std::vector<std::string> groups_in(Partition partition) const {
    std::set<std::string> groups;
    for (const auto& e : entries_) {
      if (e.partition == partition) groups.insert(e.group_id);
    }
    return {groups.begin(), groups.end()};
  }

  /// Entries of a group, in manifest order.
  std::vector<const ManifestEntry*> entries_of(std::string_view group) const {
    std::vector<const ManifestEntry*> out;
    for (const auto& e : entries_) {
      if (e.group_id == group) out.push_back(&e);
    }
    return out;
  }

  std::vector<const ManifestEntry*> entries_in(Partition partition) const {
    std::vector<const ManifestEntry*> out;
    for (const auto& e : entries_) {
      if (e.partition == partition) out.push_back(&e);
    }
    return out;
  }

 private:
  void validate() const {
    std::set<std::string> ids;
    std::map<std::string, std::optional<Partition>> group_partition;
    for (const auto& e : entries_) {
      if (!ids.insert(e.id).second) {
        throw Error(ErrorKind::kFormat, "duplicate manifest id '" + e.id + "'");
      }
      if (!(e.duration_s > 0.0)) {
        throw Error(ErrorKind::kFormat, "non-positive duration for '" + e.id + "'");
      }
      auto [it, inserted] = group_partition.emplace(e.group_id, e.partition);
      if (!inserted && it->second != e.partition) {
        throw Error(ErrorKind::kFormat,
                    "group '" + e.group_id + "' spans more than one partition");
      }
    }
  }

  SourceKind kind_;
  std::vector<ManifestEntry> entries_;
  std::filesystem::path root_;
};

namespace detail {

// Splits one CSV record; supports double-quoted fields with "" escapes.
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

inline std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

}  // namespace detail

inline constexpr std::string_view kManifestHeader = "id,path,group_id,duration_s,partition";

inline SourceManifest parse_manifest_csv(std::istream& in, SourceKind kind,
                                         std::filesystem::path root) {
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(ErrorKind::kFormat, "empty manifest");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  if (line != kManifestHeader) {
    throw Error(ErrorKind::kFormat, "manifest header must be '" +
                                        std::string(kManifestHeader) + "'");
  }
  std::vector<ManifestEntry> entries;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 5) {
      throw Error(ErrorKind::kFormat, "manifest line " + std::to_string(line_no) +
                                          ": expected 5 fields");
    }
    ManifestEntry e;
    e.id = f[0];
    e.path = f[1];
    e.group_id = f[2];
    try {
      e.duration_s = std::stod(f[3]);
    } catch (const std::exception&) {
      throw Error(ErrorKind::kFormat, "manifest line " + std::to_string(line_no) +
                                          ": bad duration '" + f[3] + "'");
    }
    if (!f[4].empty()) e.partition = parse_partition(f[4]);
    entries.push_back(std::move(e));
  }
  return SourceManifest(kind, std::move(entries), std::move(root));
}

/// Loads a manifest; relative paths resolve against the manifest's directory
/// unless `root` is given.
inline SourceManifest read_manifest_csv(const std::filesystem::path& path,
                                        SourceKind kind,
                                        std::optional<std::filesystem::path> root = {}) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open manifest " + path.string());
  return parse_manifest_csv(in, kind, root ? *root : path.parent_path());
}

inline void write_manifest_csv(std::ostream& out, const SourceManifest& manifest) {
  out << kManifestHeader << '\n';
  for (const auto& e : manifest.entries()) {
    std::ostringstream dur;
    dur.precision(17);
    dur << e.duration_s;
    out << detail::csv_escape(e.id) << ',' << detail::csv_escape(e.path) << ','
        << detail::csv_escape(e.group_id) << ',' << dur.str() << ','
        << (e.partition ? to_string(*e.partition) : "") << '\n';
  }
}

}  // namespace podmix
