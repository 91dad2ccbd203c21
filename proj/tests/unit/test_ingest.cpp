#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <random>
#include <set>

#include "synthetic.hpp"
#include "tajweed/error.hpp"
#include "tajweed/ingest.hpp"

namespace fs = std::filesystem;
using namespace tajweed;
namespace synth = tajweed::testing;

namespace {

ClipRecord rec(const std::string& id, std::array<std::uint8_t, 3> l) {
  ClipRecord r;
  r.clip_id = id;
  r.speaker_id = speaker_of(id);
  r.labels = RuleLabels::from_array(l);
  return r;
}

void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << text;
}

void touch_wav(const fs::path& root, const std::string& id) {
  write_wav_file(root / "audio" / (id + ".wav"), synth::tone(440.0, 0.1, 8000));
}

}  // namespace

TEST(LoadCorpus, PreservesFileOrder) {
  synth::TempDir tmp;
  for (const auto* id : {"S3_1", "S1_2", "S2_7"}) touch_wav(tmp.path(), id);
  write_text(tmp / "labels.csv",
             "clip_id,separate_stretching,tight_noon,hide\nS3_1,1,0,1\nS1_2,0,1,1\nS2_7,1,1,0\n");
  const auto r = load_corpus(tmp.path());
  ASSERT_EQ(r.size(), 3u);
  EXPECT_EQ(r[0].clip_id, "S3_1");
  EXPECT_EQ(r[1].clip_id, "S1_2");
  EXPECT_EQ(r[2].clip_id, "S2_7");
  EXPECT_EQ(r[1].speaker_id, "S1");
  EXPECT_EQ(r[0].labels, (RuleLabels{1, 0, 1}));
  EXPECT_EQ(r[2].audio_path, tmp.path() / "audio" / "S2_7.wav");
}

TEST(LoadCorpus, ImputesS22_6) {
  synth::TempDir tmp;
  touch_wav(tmp.path(), "S22_5");
  touch_wav(tmp.path(), "S22_6");
  write_text(tmp / "labels.csv", "clip_id,separate_stretching,tight_noon,hide\nS22_5,1,1,1\nS22_6,0,,1\n");
  const auto r = load_corpus(tmp.path());
  ASSERT_EQ(r.size(), 2u);
  EXPECT_FALSE(r[0].imputed);
  EXPECT_TRUE(r[1].imputed);
  EXPECT_EQ(r[1].labels, (RuleLabels{0, 1, 1}));

  IngestOptions opts;
  opts.exclude_imputed = true;
  const auto excl = load_corpus(tmp.path(), opts);
  ASSERT_EQ(excl.size(), 1u);
  EXPECT_EQ(excl[0].clip_id, "S22_5");
}

TEST(LoadCorpus, EmptyCellElsewhereIsError) {
  synth::TempDir tmp;
  touch_wav(tmp.path(), "S4_1");
  write_text(tmp / "labels.csv", "clip_id,separate_stretching,tight_noon,hide\nS4_1,1,,1\n");
  EXPECT_THROW(load_corpus(tmp.path()), DataError);
}

TEST(LoadCorpus, BadLabelNamesRow) {
  synth::TempDir tmp;
  touch_wav(tmp.path(), "S1_1");
  touch_wav(tmp.path(), "S1_2");
  write_text(tmp / "labels.csv", "clip_id,separate_stretching,tight_noon,hide\nS1_1,1,0,1\nS1_2,1,2,1\n");
  try {
    load_corpus(tmp.path());
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos) << e.what();
  }
}

TEST(LoadCorpus, MissingAudioListsClips) {
  synth::TempDir tmp;
  touch_wav(tmp.path(), "S1_1");
  write_text(tmp / "labels.csv",
             "clip_id,separate_stretching,tight_noon,hide\nS1_1,1,0,1\nS1_2,1,1,1\nS5_3,0,0,0\n");
  try {
    load_corpus(tmp.path());
    FAIL();
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("S1_2"), std::string::npos);
    EXPECT_NE(msg.find("S5_3"), std::string::npos);
  }
}

TEST(LoadCorpus, RejectsNonWavAndDuplicates) {
  synth::TempDir tmp;
  write_text(tmp / "audio" / "S1_1.wav", "this is an AC3 stream, honest");
  write_text(tmp / "labels.csv", "clip_id,separate_stretching,tight_noon,hide\nS1_1,1,0,1\n");
  EXPECT_THROW(load_corpus(tmp.path()), DataError);

  IngestOptions lenient;
  lenient.check_audio = false;
  EXPECT_EQ(load_corpus(tmp.path(), lenient).size(), 1u);

  synth::TempDir dup;
  touch_wav(dup.path(), "S1_1");
  write_text(dup / "labels.csv", "clip_id,separate_stretching,tight_noon,hide\nS1_1,1,0,1\nS1_1,1,0,1\n");
  EXPECT_THROW(load_corpus(dup.path()), DataError);
}

TEST(LoadCorpus, RejectsWrongHeader) {
  synth::TempDir tmp;
  touch_wav(tmp.path(), "S1_1");
  write_text(tmp / "labels.csv", "id,a,b,c\nS1_1,1,0,1\n");
  EXPECT_THROW(load_corpus(tmp.path()), DataError);
}

TEST(LoadCorpus, LabelsRoundTrip) {
  synth::TempDir tmp;
  synth::CorpusSpec spec;
  spec.n_clips = 30;
  spec.seconds = 0.1;
  const auto corpus = synth::write_corpus(tmp / "a", spec);
  const auto records = load_corpus(tmp / "a");
  write_labels_csv(records, tmp / "b.csv");
  // reuse the same audio directory with the rewritten table
  const auto again = load_corpus(tmp / "a", tmp / "b.csv");
  ASSERT_EQ(again.size(), corpus.labels.size());
  for (std::size_t i = 0; i < again.size(); ++i) {
    EXPECT_EQ(again[i].clip_id, corpus.clip_ids[i]);
    EXPECT_EQ(again[i].labels, corpus.labels[i]);
  }
}

TEST(ClassDistribution, HandCounts) {
  std::vector<ClipRecord> ones;
  for (int i = 0; i < 4; ++i) ones.push_back(rec("S1_" + std::to_string(i), {1, 1, 1}));
  EXPECT_EQ(class_distribution(ones), (std::array<double, 3>{0.0, 0.0, 0.0}));

  const std::vector<ClipRecord> two{rec("S1_1", {0, 1, 1}), rec("S1_2", {1, 1, 0})};
  EXPECT_EQ(class_distribution(two), (std::array<double, 3>{0.5, 0.0, 0.5}));

  EXPECT_THROW(class_distribution(std::vector<ClipRecord>{}), DataError);
}

TEST(ClassDistribution, MatchesLinearScan) {
  synth::TempDir tmp;
  synth::CorpusSpec spec;
  spec.n_clips = 200;
  spec.seconds = 0.05;
  spec.seed = 17;
  synth::write_corpus(tmp.path(), spec);
  const auto r = load_corpus(tmp.path());
  std::array<std::size_t, 3> zeros{};
  for (const auto& x : r) {
    zeros[0] += x.labels.separate_stretching == 0;
    zeros[1] += x.labels.tight_noon == 0;
    zeros[2] += x.labels.hide == 0;
  }
  const auto d = class_distribution(r);
  for (int j = 0; j < 3; ++j) EXPECT_EQ(d[j], static_cast<double>(zeros[j]) / static_cast<double>(r.size()));
}

// --- split ------------------------------------------------------------------

namespace {

std::vector<ClipRecord> random_records(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<ClipRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(rec("S" + std::to_string(i / 8 + 1) + "_" + std::to_string(i % 8 + 1),
                      {std::uint8_t(rng() % 2), std::uint8_t(rng() % 5 != 0), std::uint8_t(rng() % 2)}));
  }
  return out;
}

}  // namespace

TEST(Split, Sizes1505) {
  const auto r = random_records(1505, 3);
  const auto s = split_dataset(r, 42);
  EXPECT_EQ(s.train.size(), 1204u);
  EXPECT_EQ(s.test.size(), 301u);
  EXPECT_EQ(s.seed, 42u);
}

TEST(Split, DeterministicAndSeedSensitive) {
  const auto r = random_records(300, 4);
  EXPECT_EQ(split_manifest_csv(split_dataset(r, 7)), split_manifest_csv(split_dataset(r, 7)));
  EXPECT_NE(split_manifest_csv(split_dataset(r, 7)), split_manifest_csv(split_dataset(r, 8)));
}

TEST(Split, TwoStrataOfFive) {
  std::vector<ClipRecord> r;
  for (int i = 0; i < 5; ++i) r.push_back(rec("S1_" + std::to_string(i), {1, 1, 1}));
  for (int i = 0; i < 5; ++i) r.push_back(rec("S2_" + std::to_string(i), {0, 1, 0}));
  const auto s = split_dataset(r, 1);
  std::map<int, int> train_by_stratum, test_by_stratum;
  for (const auto& x : s.train) ++train_by_stratum[x.labels.triple()];
  for (const auto& x : s.test) ++test_by_stratum[x.labels.triple()];
  EXPECT_EQ(train_by_stratum[7], 4);
  EXPECT_EQ(train_by_stratum[2], 4);
  EXPECT_EQ(test_by_stratum[7], 1);
  EXPECT_EQ(test_by_stratum[2], 1);
}

TEST(Split, PartitionAndStratumBalanceForManySeeds) {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const auto r = random_records(37 + seed * 13, seed + 100);
    const auto s = split_dataset(r, seed);
    ASSERT_EQ(s.train.size(), r.size() * 8 / 10);
    std::set<std::string> train_ids, test_ids;
    for (const auto& x : s.train) train_ids.insert(x.clip_id);
    for (const auto& x : s.test) test_ids.insert(x.clip_id);
    for (const auto& id : train_ids) ASSERT_FALSE(test_ids.count(id)) << id;
    ASSERT_EQ(train_ids.size() + test_ids.size(), r.size());

    std::map<int, int> total, train;
    for (const auto& x : r) ++total[x.labels.triple()];
    for (const auto& x : s.train) ++train[x.labels.triple()];
    for (const auto& [k, n] : total) ASSERT_LE(std::abs(train[k] - 0.8 * n), 1.0) << "stratum " << k;
  }
}

TEST(Split, Preconditions) {
  const auto r = random_records(10, 1);
  EXPECT_THROW(split_dataset(r, std::nullopt), UsageError);
  EXPECT_THROW(split_dataset(std::span(r).first(4), 1), DataError);
}

TEST(SplitManifest, RoundTrip) {
  synth::TempDir tmp;
  const auto r = random_records(50, 9);
  const auto s = split_dataset(r, 5);
  write_split_manifest(s, tmp / "split.csv");
  const auto back = apply_split_manifest(r, tmp / "split.csv");
  EXPECT_EQ(back.train, s.train);
  EXPECT_EQ(back.test, s.test);

  std::ifstream in(tmp / "split.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "clip_id,subset");

  auto fewer = r;
  fewer.pop_back();
  EXPECT_THROW(apply_split_manifest(fewer, tmp / "split.csv"), DataError);
}
