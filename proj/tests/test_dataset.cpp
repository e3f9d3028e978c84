#include <gtest/gtest.h>

#include <cmath>
#include <mutex>

#include "support.hpp"

using namespace podmix;
using testsupport::small_corpus;

namespace {

MixConfig short_config(std::size_t test_records, std::size_t train_records = 0) {
  MixConfig c;
  c.counts = {{Partition::kTest, test_records}, {Partition::kTrain, train_records}};
  c.duration_s = 2.0;
  return c;
}

std::vector<GeneratedRecord> collect(const MixConfig& config, std::uint64_t seed, unsigned jobs) {
  const auto& corpus = small_corpus();
  std::mutex mu;
  std::vector<GeneratedRecord> out;
  generate_dataset(corpus.speech, corpus.music, config, seed, make_wav_loader(), jobs,
                   [&](const GeneratedRecord& r) {
                     std::lock_guard lock(mu);
                     out.push_back(r);
                   });
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.recipe.record_index < b.recipe.record_index;
  });
  return out;
}

}  // namespace

TEST(Dataset, SameSeedSameRecordsRegardlessOfJobs) {
  const auto a = collect(short_config(6, 6), 42, 1);
  const auto b = collect(short_config(6, 6), 42, 3);
  ASSERT_EQ(a.size(), 12u);
  ASSERT_EQ(b.size(), 12u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(recipe_text(a[i].recipe), recipe_text(b[i].recipe));
    EXPECT_EQ(a[i].audio.mixture, b[i].audio.mixture);
  }
}

TEST(Dataset, DifferentSeedsDiffer) {
  const auto a = collect(short_config(5), 1, 1);
  const auto b = collect(short_config(5), 2, 1);
  int differing = 0;
  for (std::size_t i = 0; i < a.size(); ++i) differing += a[i].recipe.g_m != b[i].recipe.g_m;
  EXPECT_EQ(differing, 5);
}

TEST(Dataset, RecordsSatisfyRecipeInvariants) {
  const auto& corpus = small_corpus();
  for (const auto& rec : collect(short_config(15, 10), 9, 2)) {
    const MixRecipe& r = rec.recipe;
    EXPECT_GT(r.g_m, 0.01);
    EXPECT_LT(r.g_m, 1.0);
    EXPECT_GT(r.g_r, 0.0);
    const double speech = loudness(rec.audio.speech_stem);
    const double music = loudness(rec.audio.music_stem);
    EXPECT_NEAR(music / speech, r.g_m, 1e-6);
    EXPECT_LT(music, speech);
    std::size_t covered = 0;
    for (const auto& s : r.speech_segments) {
      EXPECT_EQ(s.dest_position, covered);
      covered += s.length;
      EXPECT_EQ(corpus.speech.find(s.entry_id).group_id, r.speaker_group_id);
    }
    EXPECT_EQ(covered, r.duration);
    if (r.overlap_segment) {
      EXPECT_NE(r.overlap_segment->group_id, r.speaker_group_id);
      EXPECT_LE(r.overlap_segment->dest_position + r.overlap_segment->length, r.duration);
      EXPECT_EQ(corpus.speech.find(r.overlap_segment->entry_id).partition, r.partition);
    }
    EXPECT_EQ(corpus.music.find(r.music_fragment.entry_id).partition, r.partition);
    EXPECT_EQ(corpus.speech.find(r.speech_segments[0].entry_id).partition, r.partition);
  }
}

TEST(Dataset, RecordIdsFollowGlobalIndex) {
  const auto recs = collect(short_config(2, 3), 5, 1);
  ASSERT_EQ(recs.size(), 5u);
  EXPECT_EQ(recs[0].recipe.record_id, "train-000000");
  EXPECT_EQ(recs[3].recipe.record_id, "test-000003");
}

TEST(Dataset, StoredRecipeReRendersBitIdentically) {
  const auto& corpus = small_corpus();
  testsupport::TempDir dir;
  const DatasetRun run = write_dataset(dir.path(), corpus.speech, corpus.music, short_config(4),
                                       77, make_wav_loader(), 2);
  ASSERT_EQ(run.recipes.size(), 4u);
  ASSERT_TRUE(run.errors.empty());
  for (const auto& recipe : run.recipes) {
    const MixRecipe stored = read_recipe(dir / (recipe.record_id + ".json"));
    EXPECT_EQ(stored, recipe);
    const MixResult again = render_recipe(stored, corpus.speech, corpus.music, make_wav_loader());
    EXPECT_EQ(again.mixture, read_wav(dir / (recipe.record_id + "_mix.wav")));
    EXPECT_EQ(again.speech_stem, read_wav(dir / (recipe.record_id + "_speech.wav")));
    EXPECT_EQ(again.music_stem, read_wav(dir / (recipe.record_id + "_music.wav")));
  }
  const EvalSet set = read_eval_set(dir / "evalset_synth-test.json");
  EXPECT_EQ(set.name, "synth-test");
  EXPECT_EQ(set.tracks.size(), 4u);
}

TEST(Dataset, EditedGainScalesMusicLinearly) {
  const auto& corpus = small_corpus();
  const auto recs = collect(short_config(1), 3, 1);
  MixRecipe edited = recs[0].recipe;
  edited.g_m = 0.5;
  const MixResult r = render_recipe(edited, corpus.speech, corpus.music, make_wav_loader());
  const double factor = 0.5 / recs[0].recipe.g_m;
  for (std::size_t i = 0; i < r.music_stem.frames(); i += 97) {
    EXPECT_NEAR(r.music_stem.samples()[i], factor * recs[0].audio.music_stem.samples()[i], 1e-6);
  }
  EXPECT_EQ(r.speech_stem, recs[0].audio.speech_stem);
}

TEST(Dataset, RequiresPartitionedManifests) {
  const auto& corpus = small_corpus();
  try {
    generate_dataset(corpus.raw.speech, corpus.music, short_config(1), 1, make_wav_loader());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kParameter);
  }
}

TEST(Dataset, FailedRecordsAreReportedNotFatal) {
  const auto& corpus = small_corpus();
  MixConfig c = short_config(3);
  c.duration_s = 60.0;  // longer than any music file
  const DatasetRun run = generate_dataset(corpus.speech, corpus.music, c, 1, make_wav_loader());
  EXPECT_TRUE(run.recipes.empty());
  ASSERT_EQ(run.errors.size(), 3u);
  EXPECT_EQ(run.errors[0].record_id, "test-000000");
}

TEST(Recipe, JsonRoundTripKeepsFullSeed) {
  MixRecipe r;
  r.record_id = "test-000001";
  r.master_seed = 18446744073709551615ull;
  r.speech_segments = {{"a", 0, 10, 0}, {"b", 0, 5, 10}};
  r.overlap_segment = OverlapSegment{"c", 0, 3, 4, "spk9"};
  r.music_fragment = {"m", 123, 15};
  r.g_m = 0.123456789012345678;
  r.g_r = 3.5;
  r.duration = 15;
  EXPECT_EQ(recipe_from_json(nlohmann::json::parse(recipe_text(r))), r);
  EXPECT_THROW(recipe_from_json(nlohmann::json::parse("{\"record_id\": 1}")), Error);
}

TEST(MixConfig, ParsesOverrides) {
  const MixConfig c = parse_mix_config(nlohmann::json::parse(
      R"({"counts": {"train": 5, "validation": 2}, "duration_s": 4.5})"));
  EXPECT_EQ(c.counts.at(Partition::kTrain), 5u);
  EXPECT_FALSE(c.counts.contains(Partition::kTest));
  EXPECT_EQ(c.duration_samples(), 198450u);
  EXPECT_THROW(parse_mix_config(nlohmann::json::parse(R"({"duration_s": -1})")), Error);
}
