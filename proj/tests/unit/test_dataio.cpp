#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "sinet/dataio.hpp"
#include "support/test_util.hpp"

namespace sinet {
namespace {

namespace fs = std::filesystem;
using testing::random_tensor;

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("sinet_unit_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

void write_text(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

TEST(Blob, RoundTripBothDtypes) {
  Rng rng(1);
  const Tensor<double> d = random_tensor<double>({3, 4}, rng);
  const Tensor<float> f = random_tensor<float>({2, 0}, rng);
  std::stringstream a, b;
  write_blob(a, d);
  write_blob(b, f);
  EXPECT_EQ(read_blob<double>(a), d);
  const Tensor<double> widened = read_blob<double>(b);
  EXPECT_EQ(widened.shape(), (Shape{2, 0}));

  TempDir dir;
  write_blob(dir / "x.blob", d);
  write_blob(dir / "y.blob", d.cast<float>());
  EXPECT_EQ(blob_dtype(dir / "x.blob"), DType::kF64);
  EXPECT_EQ(blob_dtype(dir / "y.blob"), DType::kF32);
  EXPECT_EQ(read_blob<float>(dir / "y.blob"), d.cast<float>());
  EXPECT_EQ(read_blob<double>(dir / "x.blob"), d);
  const Tensor<float> scalar_vec = Tensor<float>::vector({1.5f, -2.0f});
  write_blob(dir / "v.blob", scalar_vec);
  EXPECT_EQ(read_blob<float>(dir / "v.blob"), scalar_vec);
}

TEST(Blob, MalformedInput) {
  std::stringstream good;
  write_blob(good, Tensor<double>::vector({1, 2, 3}));
  const std::string bytes = good.str();
  std::stringstream bad_magic("XINT" + bytes.substr(4));
  EXPECT_THROW(read_blob<double>(bad_magic), FormatError);
  std::string bad_dtype = bytes;
  bad_dtype[5] = 7;
  std::stringstream s1(bad_dtype);
  EXPECT_THROW(read_blob<double>(s1), FormatError);
  std::string bad_version = bytes;
  bad_version[4] = 2;
  std::stringstream s2(bad_version);
  EXPECT_THROW(read_blob<double>(s2), FormatError);
  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(read_blob<double>(truncated), FormatError);
  std::stringstream header_only(bytes.substr(0, 6));
  EXPECT_THROW(read_blob<double>(header_only), FormatError);
  EXPECT_THROW(read_blob<double>("/nonexistent/sinet.blob"), IoError);
  TempDir dir;
  write_text(dir / "t.blob", bytes + "x");
  EXPECT_THROW(read_blob<double>(dir / "t.blob"), FormatError);
}

TEST(Vocabulary, BuildOrderEncodeDecode) {
  const Vocabulary v = Vocabulary::build({tokenize("A dog and a cat"), tokenize("a cat")});
  // a x3, cat x2, then and / dog alphabetically
  EXPECT_EQ(v.tokens(), (std::vector<std::string>{"<pad>", "<bos>", "<eos>", "<unk>", "a", "cat", "and", "dog"}));
  EXPECT_EQ(v.id("zebra"), Vocabulary::kUnk);
  EXPECT_EQ(v.encode(tokenize("a zebra")), (std::vector<std::size_t>{1, 4, 3, 2}));
  EXPECT_EQ(v.decode({1, 4, 0, 5, 2, 6}), (Sentence{"a", "cat"}));
  EXPECT_THROW(v.token(8), VocabError);
  EXPECT_THROW(v.decode({9}), VocabError);
  const Vocabulary rare = Vocabulary::build({tokenize("A dog and a cat"), tokenize("a cat")}, 2);
  EXPECT_EQ(rare.size(), 6u);
}

TEST(Vocabulary, SaveLoadAndErrors) {
  TempDir dir;
  const Vocabulary v = Vocabulary::build({tokenize("x y y z")});
  v.save(dir / "vocab.txt");
  EXPECT_EQ(Vocabulary::load(dir / "vocab.txt"), v);
  write_text(dir / "bad1.txt", "<pad>\n<bos>\n");
  EXPECT_THROW(Vocabulary::load(dir / "bad1.txt"), FormatError);
  write_text(dir / "bad2.txt", "<bos>\n<pad>\n<eos>\n<unk>\n");
  EXPECT_THROW(Vocabulary::load(dir / "bad2.txt"), FormatError);
  write_text(dir / "bad3.txt", "<pad>\n<bos>\n<eos>\n<unk>\nx\nx\n");
  EXPECT_THROW(Vocabulary::load(dir / "bad3.txt"), FormatError);
  EXPECT_THROW(Vocabulary::load(dir / "none.txt"), IoError);
}

TEST(Manifest, RoundTripThroughWriteDataset) {
  TriadConfig tc;
  tc.train = 6;
  tc.val = 2;
  tc.dim = 5;
  tc.timesteps = 3;
  const SplitDataset<float> data = synth_triad<float>(tc);
  TempDir dir;
  write_dataset(dir.path.string(), data.train, Task::kAction);
  const Manifest m = Manifest::load(dir / "manifest.tsv");
  ASSERT_EQ(m.entries.size(), 6u);
  const Dataset<float> back = load_dataset<float>(m, Task::kAction);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(back.samples[i].id, data.train.samples[i].id);
    EXPECT_EQ(back.samples[i].label, data.train.samples[i].label);
    EXPECT_EQ(back.samples[i].frames, data.train.samples[i].frames);
    EXPECT_EQ(back.samples[i].objects.size(), 3u);
  }

  CaptionSynthConfig cc;
  cc.train = 4;
  cc.val = 1;
  const SplitDataset<double> caps = synth_caption<double>(cc);
  TempDir cdir;
  write_dataset(cdir.path.string(), caps.train, Task::kCaption);
  const Dataset<double> cback = load_dataset<double>(Manifest::load(cdir / "manifest.tsv"), Task::kCaption, caps.train.vocab);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(cback.samples[i].caption, caps.train.samples[i].caption);
}

TEST(Manifest, Errors) {
  TempDir dir;
  write_blob(dir / "f.blob", Tensor<float>({2, 3}));
  fs::create_directories(dir.path / "obj");
  write_text(dir / "fields.tsv", "a\tf.blob\tobj\n");
  EXPECT_THROW(Manifest::load(dir / "fields.tsv"), FormatError);
  write_text(dir / "dup.tsv", "a\tf.blob\tobj\t0\na\tf.blob\tobj\t1\n");
  EXPECT_THROW(Manifest::load(dir / "dup.tsv"), FormatError);
  write_text(dir / "missing.tsv", "a\tnope.blob\tobj\t0\n");
  try {
    Manifest::load(dir / "missing.tsv");
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("line 1"), std::string::npos) << e.what();
  }
  EXPECT_THROW(Manifest::load(dir / "none.tsv"), IoError);
  // the object dir lacks its per-frame blobs
  write_text(dir / "ok.tsv", "a\tf.blob\tobj\t0\n");
  const Manifest m = Manifest::load(dir / "ok.tsv");
  EXPECT_THROW(load_sample<float>(m.entries[0], Task::kAction), IoError);
  write_blob(dir / "obj/000000.blob", Tensor<float>({1, 3}));
  write_blob(dir / "obj/000001.blob", Tensor<float>({1, 4}));
  EXPECT_THROW(load_sample<float>(m.entries[0], Task::kAction), FormatError);
  write_blob(dir / "obj/000001.blob", Tensor<float>({0, 3}));
  EXPECT_EQ(load_sample<float>(m.entries[0], Task::kAction).label, 0u);
  write_text(dir / "label.tsv", "a\tf.blob\tobj\tcat\n");
  EXPECT_THROW(load_sample<float>(Manifest::load(dir / "label.tsv").entries[0], Task::kAction), FormatError);
  EXPECT_THROW(load_sample<float>(m.entries[0], Task::kCaption), ConfigError);
  EXPECT_THROW(parse_task("pose"), ConfigError);
}

TEST(Synth, DeterministicAndWellFormed) {
  TriadConfig tc;
  tc.train = 20;
  tc.val = 5;
  const SplitDataset<double> a = synth_triad<double>(tc);
  const SplitDataset<double> b = synth_triad<double>(tc);
  for (std::size_t i = 0; i < 20; ++i) {
    EXPECT_EQ(a.train.samples[i].frames, b.train.samples[i].frames);
    EXPECT_EQ(a.train.samples[i].label, b.train.samples[i].label);
    EXPECT_NO_THROW(a.train.samples[i].validate());
    EXPECT_LT(*a.train.samples[i].label, tc.classes);
  }
  tc.seed = 2;
  EXPECT_NE(synth_triad<double>(tc).train.samples[0].frames, a.train.samples[0].frames);
  tc.classes = 1;
  EXPECT_THROW(synth_triad<double>(tc), ConfigError);

  CaptionSynthConfig cc;
  cc.train = 10;
  cc.val = 3;
  const SplitDataset<float> c = synth_caption<float>(cc);
  for (const auto& s : c.train.samples) {
    EXPECT_NO_THROW(s.validate());
    EXPECT_EQ(s.caption.size(), 7u);  // BOS a subj verb a obj EOS
    EXPECT_EQ(c.train.vocab.token(s.caption[1]), "a");
  }
  EXPECT_EQ(c.val.vocab, c.train.vocab);
  cc.objects = 1;
  EXPECT_THROW(synth_caption<float>(cc), ConfigError);
}

TEST(Checkpoint, RoundTripAndMismatch) {
  Rng rng(4);
  Tensor<float> w = random_tensor<float>({3, 2}, rng), m = random_tensor<float>({3, 2}, rng);
  ConfigMap cfg;
  cfg.set("hidden", std::size_t{4});
  cfg.set("mode", std::string("img"));
  TempDir dir;
  save_checkpoint<float>(dir.path.string(), cfg, {{"w", &w}}, {{"w.m", &m}});
  Tensor<float> w2({3, 2}), m2({3, 2});
  load_checkpoint<float>(dir.path.string(), cfg, {{"w", &w2}}, {{"w.m", &m2}});
  EXPECT_EQ(w2, w);
  EXPECT_EQ(m2, m);
  EXPECT_EQ(read_checkpoint_config(dir.path.string()), cfg);

  ConfigMap other = cfg;
  other.set("hidden", std::size_t{5});
  EXPECT_THROW(load_checkpoint<float>(dir.path.string(), other, {{"w", &w2}}), CheckpointError);
  Tensor<float> wrong({2, 3});
  EXPECT_THROW(load_checkpoint<float>(dir.path.string(), cfg, {{"w", &wrong}}), CheckpointError);
  Tensor<float> extra({1});
  EXPECT_THROW(load_checkpoint<float>(dir.path.string(), cfg, {{"bias", &extra}}), CheckpointError);
  EXPECT_THROW(read_checkpoint_config(dir / "nothing"), CheckpointError);
}

}  // namespace
}  // namespace sinet
