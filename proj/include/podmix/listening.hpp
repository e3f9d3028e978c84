#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "podmix/error.hpp"
#include "podmix/random.hpp"
#include "podmix/report.hpp"

namespace podmix::listening {

inline const std::vector<std::string> kOpinionMetrics{"OVRL", "SIG", "BAK"};

struct Excerpt {
  std::string excerpt_id;
  std::string source_type = "speech";  // which separated source is rated
  std::filesystem::path mixture;
  std::map<std::string, std::filesystem::path> estimates;  // condition -> WAV
};

/// A two-part opinion test: part 1 rates overall quality, part 2 signal
/// distortion and background intrusiveness, on an integer 1..5 scale.
struct TestConfig {
  std::vector<Excerpt> excerpts;
  std::vector<std::string> conditions;
  std::string training_excerpt_id;
  std::map<int, std::vector<std::string>> parts{{1, {"OVRL"}}, {2, {"SIG", "BAK"}}};
  int scale_min = 1;
  int scale_max = 5;
  std::map<std::string, std::vector<std::string>> anchors{
      {"OVRL", {"Bad", "Poor", "Fair", "Good", "Excellent"}},
      {"SIG", {"Very distorted", "Fairly distorted", "Somewhat distorted",
               "Slightly distorted", "Not distorted"}},
      {"BAK", {"Very intrusive", "Somewhat intrusive", "Noticeable but not intrusive",
               "Slightly noticeable", "Not noticeable"}}};

  const Excerpt& excerpt(const std::string& id) const {
    for (const auto& e : excerpts) {
      if (e.excerpt_id == id) return e;
    }
    throw Error(ErrorKind::kNotFound, "unknown excerpt '" + id + "'");
  }

  bool is_training(const std::string& excerpt_id) const {
    return excerpt_id == training_excerpt_id;
  }

  void validate() const {
    if (conditions.empty()) throw Error(ErrorKind::kConfig, "test config lists no conditions");
    if (excerpts.empty()) throw Error(ErrorKind::kConfig, "test config lists no excerpts");
    std::set<std::string> ids;
    for (const auto& e : excerpts) {
      if (!ids.insert(e.excerpt_id).second) {
        throw Error(ErrorKind::kConfig, "duplicate excerpt '" + e.excerpt_id + "'");
      }
      for (const auto& c : conditions) {
        if (!e.estimates.contains(c)) {
          throw Error(ErrorKind::kConfig,
                      "excerpt '" + e.excerpt_id + "' has no stimulus for condition '" + c + "'");
        }
      }
    }
    if (!ids.contains(training_excerpt_id)) {
      throw Error(ErrorKind::kConfig, "training excerpt '" + training_excerpt_id + "' not found");
    }
    for (const auto& [part, metrics] : parts) {
      for (const auto& m : metrics) {
        if (std::find(kOpinionMetrics.begin(), kOpinionMetrics.end(), m) == kOpinionMetrics.end()) {
          throw Error(ErrorKind::kConfig, "unknown metric '" + m + "'");
        }
      }
    }
    if (scale_min >= scale_max) throw Error(ErrorKind::kConfig, "empty rating scale");
  }
};

inline TestConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base) {
  TestConfig c;
  try {
    c.conditions = j.at("conditions").get<std::vector<std::string>>();
    c.training_excerpt_id = j.at("training_excerpt_id").get<std::string>();
    if (j.contains("parts")) {
      c.parts.clear();
      for (const auto& [key, metrics] : j.at("parts").items()) {
        c.parts[std::stoi(key)] = metrics.get<std::vector<std::string>>();
      }
    }
    if (j.contains("scale")) {
      c.scale_min = j.at("scale").value("min", 1);
      c.scale_max = j.at("scale").value("max", 5);
    }
    if (j.contains("anchors")) {
      for (const auto& [metric, texts] : j.at("anchors").items()) {
        c.anchors[metric] = texts.get<std::vector<std::string>>();
      }
    }
    auto resolve = [&](const std::string& p) {
      std::filesystem::path path(p);
      return path.is_absolute() ? path : base / path;
    };
    for (const auto& e : j.at("excerpts")) {
      Excerpt ex;
      ex.excerpt_id = e.at("excerpt_id").get<std::string>();
      ex.source_type = e.value("source_type", std::string("speech"));
      ex.mixture = resolve(e.at("mixture").get<std::string>());
      for (const auto& [cond, path] : e.at("estimates").items()) {
        ex.estimates[cond] = resolve(path.get<std::string>());
      }
      c.excerpts.push_back(std::move(ex));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("malformed test config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw Error(ErrorKind::kConfig, std::string("malformed test config: ") + e.what());
  }
  c.validate();
  return c;
}

inline TestConfig read_test_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open test config " + path.string());
  try {
    return config_from_json(nlohmann::json::parse(in), path.parent_path());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kConfig, path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Sessions

struct Stimulus {
  std::string stimulus_id;  // opaque token, unique per session
  std::string label;        // "A", "B", ... in presentation order
  std::string condition;    // never sent to clients
};

struct Task {
  std::string excerpt_id;
  std::string source_type;
  bool training = false;
  std::vector<Stimulus> stimuli;
};

struct Session {
  std::string session_id;
  int part = 1;
  std::uint64_t seed = 0;
  std::string participant;
  std::vector<std::string> metrics;
  std::vector<Task> tasks;

  const Task* task(const std::string& excerpt_id) const {
    for (const auto& t : tasks) {
      if (t.excerpt_id == excerpt_id) return &t;
    }
    return nullptr;
  }
};

/// Lays out one session: the training excerpt first, then the scored
/// excerpts in seeded order, each with its conditions shuffled and labeled.
/// `make_token` supplies the opaque stimulus ids.
template <typename TokenFn>
Session plan_session(const TestConfig& config, int part, std::uint64_t seed,
                     TokenFn&& make_token) {
  config.validate();
  const auto part_it = config.parts.find(part);
  if (part_it == config.parts.end()) {
    throw Error(ErrorKind::kValidation, "unknown test part " + std::to_string(part));
  }
  Session s;
  s.part = part;
  s.seed = seed;
  s.metrics = part_it->second;

  SplitMix64 rng(seed ^ (static_cast<std::uint64_t>(part) << 56));
  std::vector<const Excerpt*> scored;
  const Excerpt* training = nullptr;
  for (const auto& e : config.excerpts) {
    if (config.is_training(e.excerpt_id)) {
      training = &e;
    } else {
      scored.push_back(&e);
    }
  }
  rng.shuffle(scored);
  scored.insert(scored.begin(), training);

  for (const Excerpt* e : scored) {
    Task t;
    t.excerpt_id = e->excerpt_id;
    t.source_type = e->source_type;
    t.training = config.is_training(e->excerpt_id);
    std::vector<std::string> conditions = config.conditions;
    rng.shuffle(conditions);
    for (std::size_t k = 0; k < conditions.size(); ++k) {
      std::string label;
      for (std::size_t n = k + 1; n > 0; n = (n - 1) / 26) {
        label.insert(label.begin(), static_cast<char>('A' + (n - 1) % 26));
      }
      t.stimuli.push_back({make_token(), std::move(label), conditions[k]});
    }
    s.tasks.push_back(std::move(t));
  }
  return s;
}

/// Client view of a session: no condition names.
inline nlohmann::ordered_json session_descriptor(const Session& s, const TestConfig& config) {
  nlohmann::ordered_json tasks = nlohmann::ordered_json::array();
  for (const auto& t : s.tasks) {
    nlohmann::ordered_json stimuli = nlohmann::ordered_json::array();
    for (const auto& st : t.stimuli) {
      stimuli.push_back({{"stimulus_id", st.stimulus_id},
                         {"label", st.label},
                         {"url", "/api/audio/" + t.excerpt_id + "/" + st.stimulus_id}});
    }
    tasks.push_back({{"excerpt_id", t.excerpt_id},
                     {"training", t.training},
                     {"source_type", t.source_type},
                     {"mixture_url", "/api/audio/" + t.excerpt_id + "/ref"},
                     {"stimuli", std::move(stimuli)}});
  }
  nlohmann::ordered_json anchors = nlohmann::ordered_json::object();
  for (const auto& m : s.metrics) {
    if (auto it = config.anchors.find(m); it != config.anchors.end()) anchors[m] = it->second;
  }
  return {{"session_id", s.session_id},
          {"part", s.part},
          {"participant", s.participant},
          {"metrics", s.metrics},
          {"scale", {{"min", config.scale_min}, {"max", config.scale_max}}},
          {"anchors", std::move(anchors)},
          {"tasks", std::move(tasks)}};
}

// ---------------------------------------------------------------------------
// Ratings

struct RatingRecord {
  std::string session_id;
  std::string participant;
  std::string excerpt_id;
  std::string condition;
  std::string source_type;
  std::string metric;
  int value = 0;
  bool scored = true;
  std::string timestamp;

  auto key() const { return std::tie(session_id, excerpt_id, condition, metric); }
};

inline nlohmann::ordered_json to_json(const RatingRecord& r) {
  return {{"session_id", r.session_id}, {"participant", r.participant},
          {"excerpt_id", r.excerpt_id}, {"condition", r.condition},
          {"source_type", r.source_type}, {"metric", r.metric},
          {"value", r.value},           {"scored", r.scored},
          {"timestamp", r.timestamp}};
}

inline RatingRecord rating_from_json(const nlohmann::json& j) {
  RatingRecord r;
  r.session_id = j.at("session_id").get<std::string>();
  r.participant = j.value("participant", std::string());
  r.excerpt_id = j.at("excerpt_id").get<std::string>();
  r.condition = j.at("condition").get<std::string>();
  r.source_type = j.value("source_type", std::string("speech"));
  r.metric = j.at("metric").get<std::string>();
  r.value = j.at("value").get<int>();
  r.scored = j.value("scored", true);
  r.timestamp = j.value("timestamp", std::string());
  return r;
}

/// Last-write-wins store keyed by (session, excerpt, condition, metric),
/// persisted as JSON lines. Writes are serialized; reads copy a snapshot.
class RatingStore {
 public:
  RatingStore() = default;

  explicit RatingStore(std::filesystem::path path) : path_(std::move(path)) {
    std::ifstream in(*path_);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      try {
        upsert(rating_from_json(nlohmann::json::parse(line)));
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::kFormat, path_->string() + ":" + std::to_string(line_no) +
                                            ": " + e.what());
      }
    }
  }

  void put(const std::vector<RatingRecord>& records) {
    std::lock_guard lock(mutex_);
    if (path_) {
      std::ofstream out(*path_, std::ios::app);
      if (!out) throw Error(ErrorKind::kIo, "cannot append to " + path_->string());
      for (const auto& r : records) out << to_json(r).dump() << '\n';
      out.flush();
    }
    for (const auto& r : records) upsert(r);
  }

  std::vector<RatingRecord> snapshot() const {
    std::lock_guard lock(mutex_);
    std::vector<RatingRecord> out;
    out.reserve(records_.size());
    for (const auto& [_, r] : records_) out.push_back(r);
    return out;
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return records_.size();
  }

 private:
  using Key = std::tuple<std::string, std::string, std::string, std::string>;

  void upsert(const RatingRecord& r) {
    records_[Key{r.session_id, r.excerpt_id, r.condition, r.metric}] = r;
  }

  std::optional<std::filesystem::path> path_;
  mutable std::mutex mutex_;
  std::map<Key, RatingRecord> records_;
};

// ---------------------------------------------------------------------------
// Mean opinion scores

struct MosEntry {
  std::string condition;
  std::string metric;
  std::string source_type;
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

struct MosSummary {
  std::vector<MosEntry> entries;
  std::vector<std::string> notes;  // groups without ratings
};

/// Mean and population std per (source type, condition, metric) over scored
/// excerpts. Training-excerpt ratings never contribute.
inline MosSummary compute_mos(const std::vector<RatingRecord>& records, const TestConfig& config) {
  std::set<std::string> source_types;
  for (const auto& e : config.excerpts) {
    if (!config.is_training(e.excerpt_id)) source_types.insert(e.source_type);
  }
  std::vector<std::string> metrics;
  for (const auto& m : kOpinionMetrics) {
    for (const auto& [_, part_metrics] : config.parts) {
      if (std::find(part_metrics.begin(), part_metrics.end(), m) != part_metrics.end()) {
        metrics.push_back(m);
        break;
      }
    }
  }
  MosSummary summary;
  for (const auto& source : source_types) {
    for (const auto& condition : config.conditions) {
      for (const auto& metric : metrics) {
        std::vector<double> values;
        for (const auto& r : records) {
          if (!r.scored || config.is_training(r.excerpt_id)) continue;
          if (r.source_type == source && r.condition == condition && r.metric == metric) {
            values.push_back(r.value);
          }
        }
        if (values.empty()) {
          summary.notes.push_back("no ratings for " + condition + " / " + metric + " (" +
                                  source + ")");
          continue;
        }
        const auto ms = mean_and_pstd(values);
        summary.entries.push_back({condition, metric, source, ms.mean, ms.std, values.size()});
      }
    }
  }
  return summary;
}

inline nlohmann::ordered_json to_json(const MosSummary& s) {
  nlohmann::ordered_json entries = nlohmann::ordered_json::array();
  for (const auto& e : s.entries) {
    entries.push_back({{"condition", e.condition},
                       {"metric", e.metric},
                       {"source_type", e.source_type},
                       {"mean", e.mean},
                       {"std", e.std},
                       {"n", e.n},
                       {"display", format_mos(e.mean, e.std)}});
  }
  return {{"entries", std::move(entries)}, {"notes", s.notes}};
}

/// MOS entries as report rows, so they render next to objective metrics.
inline AggregateReport to_report(const MosSummary& s,
                                 const std::string& set = "real-no-reference") {
  AggregateReport report;
  for (const auto& e : s.entries) {
    AggregateEntry a{set, e.condition, e.source_type, e.metric};
    a.mean = e.mean;
    a.std = e.std;
    a.count = e.n;
    report.entries.push_back(std::move(a));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Service

struct RatingInput {
  std::string stimulus_id;
  std::string metric;
  double value = 0.0;
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Transport-independent core of the listening test: sessions, stimulus
/// resolution, rating validation and MOS. Thread-safe.
class ListeningTestService {
 public:
  ListeningTestService(TestConfig config, RatingStore& store)
      : config_(std::move(config)), store_(store), token_rng_(std::random_device{}()) {
    config_.validate();
  }

  const TestConfig& config() const noexcept { return config_; }

  Session create_session(int part, std::uint64_t seed, std::string participant = {}) {
    std::lock_guard lock(mutex_);
    Session s = plan_session(config_, part, seed, [this] { return token(); });
    s.session_id = token() + token();
    s.participant = std::move(participant);
    for (const auto& t : s.tasks) {
      for (const auto& st : t.stimuli) {
        stimuli_[st.stimulus_id] = {t.excerpt_id, st.condition};
      }
    }
    sessions_[s.session_id] = s;
    return s;
  }

  std::optional<Session> session(const std::string& id) const {
    std::lock_guard lock(mutex_);
    if (auto it = sessions_.find(id); it != sessions_.end()) return it->second;
    return std::nullopt;
  }

  /// WAV path for a stimulus id ("ref" is the unprocessed mixture).
  std::filesystem::path stimulus_path(const std::string& excerpt_id,
                                      const std::string& stimulus_id) const {
    const Excerpt& excerpt = config_.excerpt(excerpt_id);
    if (stimulus_id == "ref") return excerpt.mixture;
    std::lock_guard lock(mutex_);
    auto it = stimuli_.find(stimulus_id);
    if (it == stimuli_.end() || it->second.first != excerpt_id) {
      throw Error(ErrorKind::kNotFound, "unknown stimulus '" + stimulus_id + "'");
    }
    return excerpt.estimates.at(it->second.second);
  }

  /// Validates a complete page and stores it. Resubmitting a page overwrites
  /// the earlier ratings.
  std::size_t record_ratings(const std::string& session_id, const std::string& excerpt_id,
                             const std::vector<RatingInput>& ratings) {
    const auto s = session(session_id);
    if (!s) throw Error(ErrorKind::kNotFound, "unknown session '" + session_id + "'");
    const Task* task = s->task(excerpt_id);
    if (!task) {
      throw Error(ErrorKind::kValidation,
                  "excerpt '" + excerpt_id + "' is not part of session " + session_id);
    }
    std::vector<std::string> problems;
    std::set<std::pair<std::string, std::string>> seen;
    std::vector<RatingRecord> records;
    const std::string now = utc_timestamp();
    for (const auto& r : ratings) {
      const std::string where = r.stimulus_id + "/" + r.metric;
      auto st = std::find_if(task->stimuli.begin(), task->stimuli.end(),
                             [&](const Stimulus& x) { return x.stimulus_id == r.stimulus_id; });
      if (st == task->stimuli.end()) {
        problems.push_back(where + ": unknown stimulus");
        continue;
      }
      if (std::find(s->metrics.begin(), s->metrics.end(), r.metric) == s->metrics.end()) {
        problems.push_back(where + ": metric not rated in part " + std::to_string(s->part));
        continue;
      }
      if (r.value != std::floor(r.value) || r.value < config_.scale_min ||
          r.value > config_.scale_max) {
        problems.push_back(where + ": value " + format_number(r.value) + " outside integers " +
                           std::to_string(config_.scale_min) + ".." +
                           std::to_string(config_.scale_max));
        continue;
      }
      if (!seen.insert({r.stimulus_id, r.metric}).second) {
        problems.push_back(where + ": rated twice");
        continue;
      }
      records.push_back({session_id, s->participant, excerpt_id, st->condition, task->source_type,
                         r.metric, static_cast<int>(r.value), !task->training, now});
    }
    for (const auto& st : task->stimuli) {
      for (const auto& m : s->metrics) {
        if (!seen.contains({st.stimulus_id, m})) {
          problems.push_back(st.stimulus_id + "/" + m + ": missing");
        }
      }
    }
    if (!problems.empty()) {
      std::string msg = "invalid ratings:";
      for (const auto& p : problems) msg += " [" + p + "]";
      throw Error(ErrorKind::kValidation, msg);
    }
    store_.put(records);
    return records.size();
  }

  MosSummary results() const { return compute_mos(store_.snapshot(), config_); }

 private:
  std::string token() {
    static constexpr char kHex[] = "0123456789abcdef";
    std::uint64_t v = token_rng_.next();
    std::string out(12, '0');
    for (auto& c : out) {
      c = kHex[v & 0xf];
      v >>= 4;
    }
    return out;
  }

  TestConfig config_;
  RatingStore& store_;
  mutable std::mutex mutex_;
  SplitMix64 token_rng_;
  std::map<std::string, Session> sessions_;
  std::map<std::string, std::pair<std::string, std::string>> stimuli_;  // id -> (excerpt, condition)
};

}  // namespace podmix::listening
