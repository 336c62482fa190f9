#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "partmotion/partition.hpp"
#include "partmotion/rng.hpp"

namespace partmotion {

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// mot-v1: header `mot-v1 <frames> <width> <layout-id>`, one tab-separated
// frame per line. Values are written with enough digits to round-trip.
Motion read_motion_file(const std::string& path);
void write_motion_file(const std::string& path, const Motion& m);

struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // floored at 1e-6
};

struct DatasetManifest {
  std::string root;
  std::string layout;
  std::vector<std::string> train_ids, val_ids, test_ids;
  NormStats norm;
  int min_frames = 40;
  int max_frames = 196;
};

// Reads splits/{train,val,test}.txt and norm/{mean,std}.txt under root.
DatasetManifest load_manifest(const std::string& root, const std::string& layout,
                              int min_frames = 40, int max_frames = 196);

struct DatasetItem {
  std::string id;
  std::string prompt;
  Motion motion;  // normalized, frames a multiple of the downsample rate
};

struct IngestReport {
  int kept = 0;
  int dropped_short = 0;
  int dropped_long = 0;
  int cropped = 0;
};

struct Dataset {
  std::string layout;
  int width = 0;
  NormStats norm;
  std::vector<DatasetItem> items;
  IngestReport report;
};

// Loads one split, drops motions outside [min,max] frames, tail-crops the
// rest to a multiple of `downsample`, and normalizes with the manifest stats.
Dataset ingest(const DatasetManifest& manifest, const std::string& split, int downsample);

// Writes an ingested dataset back out such that re-ingesting is the identity:
// motions carry the normalized values and the norm files are mean 0 / std 1.
void export_ingested(const Dataset& ds, const std::string& dir);

// Column-wise mean and population standard deviation over all frames of the
// given motions; std floored at 1e-6.
NormStats compute_normalization(const std::vector<Motion>& motions);

void normalize(Motion& m, const NormStats& n);
void denormalize(Motion& m, const NormStats& n);

struct TextMotionPair {
  std::string id;
  std::string prompt;
  int token_count = 0;  // whitespace tokens
};

int whitespace_token_count(const std::string& prompt);

struct QuartileGroup {
  int min_len = 0, max_len = 0;
  double avg_len = 0.0;
  int count = 0;
  double percentage = 0.0;
  std::vector<TextMotionPair> pairs;
};

// Sorts by token count (stable by id on ties) and cuts into four contiguous
// groups with counts as equal as possible.
std::vector<QuartileGroup> text_length_quartiles(std::vector<TextMotionPair> pairs);

// Synthetic coupled-motion corpus. A per-sequence global phase drives all six
// parts with class-specific frequency ratios and phase offsets, so part
// channels are strongly correlated within a sequence; prompts name the class.
struct SynthOptions {
  int n_sequences = 200;
  int frames = 64;
  uint64_t seed = 0;
  double train_fraction = 0.70;
  double val_fraction = 0.10;  // remainder goes to test
};

void synth_generate(const SynthOptions& opt, const std::string& out_dir);

std::string read_prompt_file(const std::string& path);

}  // namespace partmotion
