#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "podmix/error.hpp"
#include "podmix/manifest.hpp"
#include "podmix/mix.hpp"

namespace podmix {

/// Everything needed to re-render one synthetic mixture bit-exactly.
struct MixRecipe {
  std::string record_id;
  std::uint64_t record_index = 0;
  Partition partition = Partition::kTest;
  std::uint64_t master_seed = 0;
  int sample_rate = kDefaultSampleRate;
  std::string speaker_group_id;
  std::vector<SpeechSegment> speech_segments;
  std::optional<OverlapSegment> overlap_segment;
  MusicFragment music_fragment;
  double g_m = 0.0;
  double g_r = 0.0;
  std::size_t duration = 0;

  bool operator==(const MixRecipe&) const = default;
};

inline nlohmann::ordered_json to_json(const MixRecipe& r) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["record_id"] = r.record_id;
  j["record_index"] = r.record_index;
  j["partition"] = std::string(to_string(r.partition));
  // Decimal string: 64-bit integers are not portable through JSON numbers.
  j["master_seed"] = std::to_string(r.master_seed);
  j["sample_rate"] = r.sample_rate;
  j["speaker_group_id"] = r.speaker_group_id;
  ordered_json segs = ordered_json::array();
  for (const auto& s : r.speech_segments) {
    segs.push_back({{"entry_id", s.entry_id},
                    {"source_offset", s.source_offset},
                    {"length", s.length},
                    {"dest_position", s.dest_position}});
  }
  j["speech_segments"] = std::move(segs);
  if (r.overlap_segment) {
    const auto& o = *r.overlap_segment;
    j["overlap_segment"] = {{"entry_id", o.entry_id},
                            {"source_offset", o.source_offset},
                            {"length", o.length},
                            {"dest_position", o.dest_position},
                            {"group_id", o.group_id}};
  } else {
    j["overlap_segment"] = nullptr;
  }
  j["music_fragment"] = {{"entry_id", r.music_fragment.entry_id},
                         {"source_offset", r.music_fragment.source_offset},
                         {"length", r.music_fragment.length}};
  j["g_m"] = r.g_m;
  j["g_r"] = r.g_r;
  j["duration"] = r.duration;
  return j;
}

inline MixRecipe recipe_from_json(const nlohmann::json& j) {
  try {
    MixRecipe r;
    r.record_id = j.at("record_id").get<std::string>();
    r.record_index = j.value("record_index", std::uint64_t{0});
    r.partition = parse_partition(j.value("partition", std::string("test")));
    r.master_seed = std::stoull(j.at("master_seed").get<std::string>());
    r.sample_rate = j.value("sample_rate", kDefaultSampleRate);
    r.speaker_group_id = j.value("speaker_group_id", std::string());
    for (const auto& s : j.at("speech_segments")) {
      r.speech_segments.push_back({s.at("entry_id").get<std::string>(),
                                   s.at("source_offset").get<std::size_t>(),
                                   s.at("length").get<std::size_t>(),
                                   s.at("dest_position").get<std::size_t>()});
    }
    if (j.contains("overlap_segment") && !j.at("overlap_segment").is_null()) {
      const auto& o = j.at("overlap_segment");
      r.overlap_segment = OverlapSegment{o.at("entry_id").get<std::string>(),
                                         o.at("source_offset").get<std::size_t>(),
                                         o.at("length").get<std::size_t>(),
                                         o.at("dest_position").get<std::size_t>(),
                                         o.at("group_id").get<std::string>()};
    }
    const auto& m = j.at("music_fragment");
    r.music_fragment = {m.at("entry_id").get<std::string>(),
                        m.at("source_offset").get<std::size_t>(),
                        m.at("length").get<std::size_t>()};
    r.g_m = j.at("g_m").get<double>();
    r.g_r = j.at("g_r").get<double>();
    r.duration = j.at("duration").get<std::size_t>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("malformed recipe: ") + e.what());
  } catch (const std::logic_error& e) {
    throw Error(ErrorKind::kFormat, std::string("malformed recipe: ") + e.what());
  }
}

inline std::string recipe_text(const MixRecipe& r) { return to_json(r).dump(2) + "\n"; }

inline void write_recipe(const std::filesystem::path& path, const MixRecipe& r) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << recipe_text(r);
}

inline MixRecipe read_recipe(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open recipe " + path.string());
  try {
    return recipe_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat, path.string() + ": " + e.what());
  }
}

}  // namespace podmix
