#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dyml/common.hpp"

namespace dyml {

// ---------------------------------------------------------------------------
// Hierarchical label space. Scale 0 is the finest level, scale M-1 the
// coarsest. parent[i] maps a class id at scale i to its class id at scale
// i+1; every fine class therefore has exactly one ancestor chain.
//
// A taxonomy may cover only part of its id range: datasets loaded from disk
// reconstruct the hierarchy from observed label chains, and ids never seen in
// the file are marked absent. Freshly built taxonomies have all ids present.
// ---------------------------------------------------------------------------

struct Taxonomy {
  int num_scales = 0;                        // M
  std::vector<int> classes_per_scale;        // size M, index 0 = finest
  std::vector<std::vector<int>> parent;      // parent[i], i in [0, M-2]; -1 = absent
  std::vector<std::vector<char>> present;    // per scale, per class id
  std::vector<std::string> warnings;         // non-fatal validation notes

  // ancestors[s][fine_id] = class id at scale s (ancestors[0] is identity)
  std::vector<std::vector<int>> ancestors;

  int ancestor(int fine_id, int scale) const { return ancestors[scale][fine_id]; }

  std::vector<int> present_classes(int scale) const {
    std::vector<int> out;
    for (int c = 0; c < classes_per_scale[scale]; ++c)
      if (present[scale][c]) out.push_back(c);
    return out;
  }
};

// Validates counts, totality (over present classes), range and surjectivity
// of the parent maps, then precomputes ancestor chains.
// Throws NestingViolation on any structural defect.
Taxonomy build_taxonomy(const std::vector<int>& classes_per_scale,
                        const std::vector<std::vector<int>>& parent_maps);

// Uniform nesting: branching[0] top-level classes, each with branching[i]
// children at the next finer level. branching is ordered coarse to fine.
Taxonomy nested_taxonomy(const std::vector<int>& branching);

// Rebuild a (possibly partial) taxonomy from observed label chains.
Taxonomy taxonomy_from_observations(const std::vector<int>& classes_per_scale,
                                    const std::vector<std::vector<std::int32_t>>& chains);

// ---------------------------------------------------------------------------
// Samples and datasets. Features are stored as float32 exactly as they
// appear in the container format; all computation widens to double.
// ---------------------------------------------------------------------------

struct Sample {
  std::vector<float> features;
  std::vector<std::int32_t> labels;  // length M, labels[s] = class id at scale s
};

enum class Split { train, test };

struct Dataset {
  Taxonomy taxonomy;
  Split split = Split::train;
  std::vector<Sample> samples;

  int d_in() const { return samples.empty() ? 0 : static_cast<int>(samples[0].features.size()); }
  std::vector<int> class_ids_at(int scale) const;  // sorted distinct ids observed
};

// Throws NestingViolation if any sample's label chain is out of range or
// inconsistent with the taxonomy's parent maps.
void validate_dataset(const Dataset& ds);

// ---------------------------------------------------------------------------
// Synthetic nested-cluster generator.
//
// branching is ordered coarse to fine; sigma has one entry per child
// generation step (coarse->middle, middle->fine, ...), strictly decreasing.
// Coarse centers are uniform on the unit sphere; each child center is its
// parent plus isotropic Gaussian noise, renormalized; samples are fine
// centers plus Gaussian(sigma_sample), not normalized.
//
// Train and test share one taxonomy whose fine/middle id ranges are split
// into a train block and a test block (open-set at fine and middle); coarse
// ids are shared between the splits, with fresh test subtrees underneath.
// ---------------------------------------------------------------------------

struct SynthSpec {
  std::vector<int> branching;       // coarse -> fine
  int samples_per_fine_class = 20;
  int d_in = 32;
  std::vector<double> sigma;        // length M-1, coarse -> fine steps
  double sigma_sample = 0.12;
  std::uint64_t seed = 7;
};

std::pair<Dataset, Dataset> generate_synthetic(const SynthSpec& spec);

// ---------------------------------------------------------------------------
// Container formats.
//
// Binary: magic "DYML1", u32 d_in, u32 M, u32 C^1..C^M, u32 sample count,
// then per sample d_in little-endian f32 features and M little-endian i32
// labels. CSV: one row per sample, features then labels; floats printed with
// enough digits to round-trip f32.
// ---------------------------------------------------------------------------

void write_dataset(const std::string& path, const Dataset& ds);
Dataset read_dataset(const std::string& path, Split split);

void export_csv(const std::string& path, const Dataset& ds);
Dataset import_csv(const std::string& path, int num_scales, Split split);

}  // namespace dyml
