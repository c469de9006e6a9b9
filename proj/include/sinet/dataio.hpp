#pragma once

// Tensor blobs, feature manifests, vocabularies, synthetic datasets and
// checkpoint directories.
//
// Blob layout (little endian):
//   "SINT" | version u8 = 1 | dtype u8 (0 f32, 1 f64) | rank u8 | dims u32 x rank | payload

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "sinet/config.hpp"
#include "sinet/layers.hpp"
#include "sinet/metrics.hpp"
#include "sinet/sample.hpp"

namespace sinet {

enum class Task { kAction, kCaption };

std::string task_name(Task task);
Task parse_task(const std::string& name);

// ---------------------------------------------------------------------------
// Blobs

enum class DType : std::uint8_t { kF32 = 0, kF64 = 1 };

template <typename T>
void write_blob(std::ostream& out, const Tensor<T>& t);
template <typename T>
void write_blob(const std::string& path, const Tensor<T>& t);

// Reads either dtype and converts to T. FormatError on a bad header or a
// truncated payload; IoError when the file cannot be opened.
template <typename T>
Tensor<T> read_blob(std::istream& in, const std::string& name = "<stream>");
template <typename T>
Tensor<T> read_blob(const std::string& path);

DType blob_dtype(const std::string& path);

// ---------------------------------------------------------------------------
// Vocabulary

class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kBos = 1;
  static constexpr std::size_t kEos = 2;
  static constexpr std::size_t kUnk = 3;
  static constexpr std::size_t kReserved = 4;

  Vocabulary();

  // Tokens ordered by frequency (descending), then lexicographically.
  static Vocabulary build(const std::vector<Sentence>& corpus, std::size_t min_count = 1);

  std::size_t size() const { return tokens_.size(); }
  bool contains(const std::string& token) const { return ids_.count(token) != 0; }
  // Unknown tokens map to kUnk.
  std::size_t id(const std::string& token) const;
  // VocabError when out of range.
  const std::string& token(std::size_t id) const;

  // [BOS, ids..., EOS].
  std::vector<std::size_t> encode(const Sentence& sentence) const;
  // Drops BOS and PAD, stops at the first EOS.
  Sentence decode(const std::vector<std::size_t>& ids) const;

  // One token per line, in id order, reserved entries included.
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  const std::vector<std::string>& tokens() const { return tokens_; }
  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  void add(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> ids_;
};

// Lowercased whitespace split.
Sentence tokenize(const std::string& text);

// ---------------------------------------------------------------------------
// Datasets

template <typename T>
struct Dataset {
  std::vector<VideoSample<T>> samples;
  std::size_t num_classes = 0;
  Vocabulary vocab;
  std::vector<Sentence> captions;  // reference caption per sample (caption task)

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }

  template <typename U>
  Dataset<U> cast() const {
    Dataset<U> out;
    for (const auto& s : samples) out.samples.push_back(s.template cast<U>());
    out.num_classes = num_classes;
    out.vocab = vocab;
    out.captions = captions;
    return out;
  }
};

template <typename T>
struct SplitDataset {
  Dataset<T> train;
  Dataset<T> val;
};

// Manifest: one TSV line per video with
//   id <TAB> frame blob [T x m] <TAB> object dir <TAB> label or caption
// The object dir holds 000000.blob, 000001.blob, ... one [N_t x m] blob per
// frame. Relative paths resolve against the manifest's directory.
struct ManifestEntry {
  std::size_t line = 0;
  std::string id;
  std::string frames_path;
  std::string objects_dir;
  std::string field;
};

struct Manifest {
  std::string path;
  std::vector<ManifestEntry> entries;

  // FormatError on a wrong field count or a duplicate id; IoError naming the
  // line when a referenced blob or directory is missing.
  static Manifest load(const std::string& path);
};

// The caption task tokenizes the field and encodes it with vocab; the action
// task parses it as a class id.
template <typename T>
VideoSample<T> load_sample(const ManifestEntry& entry, Task task, const Vocabulary* vocab = nullptr);

// Loads every entry in file order. For the caption task an empty vocab is
// built from the manifest's captions.
template <typename T>
Dataset<T> load_dataset(const Manifest& manifest, Task task, Vocabulary vocab = {});

// Writes samples as blobs plus a manifest (labels or reference captions).
template <typename T>
void write_dataset(const std::string& dir, const Dataset<T>& data, Task task);

// ---------------------------------------------------------------------------
// Synthetic data

// Triad task. Each class owns three prototype objects; a video of class c
// plants its triple in at least ceil(T/2) frames. Every video also draws one
// of two tag vectors, added to its frame features (with a per-video scene
// vector and noise) and to the objects of its class triple. With room for
// six objects, a foil class's triple is planted the same way but carries the
// other tag, so the objects alone are symmetric between class and foil: the
// label is the triple whose tag matches the frames. Remaining slots hold
// near-misses (three members of a class with one member missing and another
// duplicated) and generic distractors, each with a random tag.
struct TriadConfig {
  std::uint64_t seed = 1;
  std::size_t classes = 8;
  std::size_t distractors = 16;  // generic distractor prototypes
  double noise = 0.3;
  std::size_t timesteps = 8;
  std::size_t objects = 8;
  std::size_t dim = 32;
  std::size_t train = 2000;
  std::size_t val = 500;
  double decoy_rate = 1.0;  // probability of each near-miss group being present
  double tag_scale = 1.0;

  std::size_t prototypes() const { return 3 * classes + distractors; }
  void validate() const;
};

struct TriadWorld {
  Tensor<double> prototypes;  // [prototypes x dim]; rows 3c..3c+2 belong to class c
  std::vector<std::array<std::size_t, 3>> triples;
  Tensor<double> tags;  // [2 x dim]
};

TriadWorld triad_world(const TriadConfig& cfg);
template <typename T>
SplitDataset<T> synth_triad(const TriadConfig& cfg);

// Caption task: "a <subj> <verb> a <obj>". Subject and object words each own
// an object prototype planted in at least ceil(T/2) frames; the verb owns a
// scene prototype that drives the frame features.
struct CaptionSynthConfig {
  std::uint64_t seed = 1;
  std::size_t subjects = 6;
  std::size_t verbs = 6;
  std::size_t objects_words = 6;
  std::size_t distractors = 8;
  double noise = 0.0;
  std::size_t timesteps = 6;
  std::size_t objects = 5;
  std::size_t dim = 24;
  std::size_t train = 400;
  std::size_t val = 100;

  void validate() const;
};

struct CaptionWorld {
  std::vector<std::string> subjects;
  std::vector<std::string> verbs;
  std::vector<std::string> objects;
  Tensor<double> subject_protos;  // [subjects x dim]
  Tensor<double> object_protos;   // [objects x dim]
  Tensor<double> verb_scenes;     // [verbs x dim]
  Tensor<double> distractors;     // [distractors x dim]
};

CaptionWorld caption_world(const CaptionSynthConfig& cfg);
template <typename T>
SplitDataset<T> synth_caption(const CaptionSynthConfig& cfg);

// ---------------------------------------------------------------------------
// Checkpoints: <dir>/config.txt, <dir>/params/<name>.blob, <dir>/optim/<name>.blob

template <typename T>
void save_checkpoint(const std::string& dir, const ConfigMap& config, const TensorList<T>& params,
                     const TensorList<T>& optim = {});

ConfigMap read_checkpoint_config(const std::string& dir);

// Fills params (and optim, when non-empty) from dir. CheckpointError when a
// key of `expected` differs from the stored config, or a tensor is missing
// or shaped differently.
template <typename T>
void load_checkpoint(const std::string& dir, const ConfigMap& expected, const TensorList<T>& params,
                     const TensorList<T>& optim = {});

}  // namespace sinet
