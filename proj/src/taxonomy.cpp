#include "dyml/taxonomy.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

namespace dyml {

namespace {

void compute_ancestors(Taxonomy& t) {
  const int fine_count = t.classes_per_scale[0];
  t.ancestors.assign(t.num_scales, std::vector<int>(fine_count, -1));
  for (int f = 0; f < fine_count; ++f) {
    if (!t.present[0][f]) continue;
    int c = f;
    t.ancestors[0][f] = f;
    for (int s = 0; s + 1 < t.num_scales; ++s) {
      c = t.parent[s][c];
      t.ancestors[s + 1][f] = c;
    }
  }
}

void validate_structure(Taxonomy& t) {
  const int m = t.num_scales;
  if (m < 1) throw NestingViolation("need at least one scale");
  for (int s = 0; s < m; ++s) {
    if (t.classes_per_scale[s] < 1)
      throw NestingViolation("scale " + std::to_string(s) + " has no classes");
  }
  for (int s = 0; s + 1 < m; ++s) {
    const auto& map = t.parent[s];
    if (static_cast<int>(map.size()) != t.classes_per_scale[s])
      throw NestingViolation("parent map at scale " + std::to_string(s) +
                             " is partial: " + std::to_string(map.size()) + " entries for " +
                             std::to_string(t.classes_per_scale[s]) + " classes");
    std::vector<char> hit(t.classes_per_scale[s + 1], 0);
    for (int c = 0; c < t.classes_per_scale[s]; ++c) {
      if (!t.present[s][c]) {
        if (map[c] != -1)
          throw NestingViolation("absent class " + std::to_string(c) + " has a parent");
        continue;
      }
      const int p = map[c];
      if (p < 0 || p >= t.classes_per_scale[s + 1])
        throw NestingViolation("parent of class " + std::to_string(c) + " at scale " +
                               std::to_string(s) + " out of range: " + std::to_string(p));
      if (!t.present[s + 1][p])
        throw NestingViolation("parent of class " + std::to_string(c) + " at scale " +
                               std::to_string(s) + " is an absent class");
      hit[p] = 1;
    }
    for (int p = 0; p < t.classes_per_scale[s + 1]; ++p) {
      if (t.present[s + 1][p] && !hit[p])
        throw NestingViolation("class " + std::to_string(p) + " at scale " +
                               std::to_string(s + 1) + " has no children (map not surjective)");
    }
  }
  for (int s = 0; s + 1 < m; ++s) {
    if (t.classes_per_scale[s] == t.classes_per_scale[s + 1])
      t.warnings.push_back("scales " + std::to_string(s) + " and " + std::to_string(s + 1) +
                           " have equal class counts; they do not distinguish anything");
  }
}

}  // namespace

Taxonomy build_taxonomy(const std::vector<int>& classes_per_scale,
                        const std::vector<std::vector<int>>& parent_maps) {
  Taxonomy t;
  t.num_scales = static_cast<int>(classes_per_scale.size());
  t.classes_per_scale = classes_per_scale;
  if (static_cast<int>(parent_maps.size()) != std::max(0, t.num_scales - 1))
    throw NestingViolation("expected " + std::to_string(t.num_scales - 1) + " parent maps, got " +
                           std::to_string(parent_maps.size()));
  t.parent = parent_maps;
  t.present.resize(t.num_scales);
  for (int s = 0; s < t.num_scales; ++s)
    t.present[s].assign(static_cast<std::size_t>(std::max(0, classes_per_scale[s])), 1);
  validate_structure(t);
  compute_ancestors(t);
  return t;
}

Taxonomy nested_taxonomy(const std::vector<int>& branching) {
  if (branching.empty()) throw NestingViolation("empty branching list");
  const int m = static_cast<int>(branching.size());
  // counts per scale, fine first
  std::vector<int> counts(m, 0);
  int prod = 1;
  for (int level = 0; level < m; ++level) {
    prod *= branching[level];
    counts[m - 1 - level] = prod;
  }
  std::vector<std::vector<int>> parents(m - 1);
  for (int s = 0; s + 1 < m; ++s) {
    const int fanout = branching[m - 1 - s];
    parents[s].resize(counts[s]);
    for (int c = 0; c < counts[s]; ++c) parents[s][c] = c / fanout;
  }
  return build_taxonomy(counts, parents);
}

Taxonomy taxonomy_from_observations(const std::vector<int>& classes_per_scale,
                                    const std::vector<std::vector<std::int32_t>>& chains) {
  Taxonomy t;
  t.num_scales = static_cast<int>(classes_per_scale.size());
  t.classes_per_scale = classes_per_scale;
  t.present.resize(t.num_scales);
  for (int s = 0; s < t.num_scales; ++s) t.present[s].assign(classes_per_scale[s], 0);
  t.parent.resize(std::max(0, t.num_scales - 1));
  for (int s = 0; s + 1 < t.num_scales; ++s) t.parent[s].assign(classes_per_scale[s], -1);

  for (const auto& chain : chains) {
    if (static_cast<int>(chain.size()) != t.num_scales)
      throw NestingViolation("label chain length mismatch");
    for (int s = 0; s < t.num_scales; ++s) {
      const int c = chain[s];
      if (c < 0 || c >= classes_per_scale[s])
        throw NestingViolation("label " + std::to_string(c) + " out of range at scale " +
                               std::to_string(s));
      t.present[s][c] = 1;
      if (s + 1 < t.num_scales) {
        const int p = chain[s + 1];
        if (t.parent[s][c] != -1 && t.parent[s][c] != p)
          throw NestingViolation("class " + std::to_string(c) + " at scale " + std::to_string(s) +
                                 " observed with two different parents");
        t.parent[s][c] = p;
      }
    }
  }
  validate_structure(t);
  compute_ancestors(t);
  return t;
}

std::vector<int> Dataset::class_ids_at(int scale) const {
  std::set<int> ids;
  for (const auto& s : samples) ids.insert(s.labels[scale]);
  return {ids.begin(), ids.end()};
}

void validate_dataset(const Dataset& ds) {
  const Taxonomy& t = ds.taxonomy;
  for (std::size_t j = 0; j < ds.samples.size(); ++j) {
    const auto& chain = ds.samples[j].labels;
    if (static_cast<int>(chain.size()) != t.num_scales)
      throw NestingViolation("sample " + std::to_string(j) + " has wrong chain length");
    for (int s = 0; s < t.num_scales; ++s) {
      if (chain[s] < 0 || chain[s] >= t.classes_per_scale[s])
        throw NestingViolation("sample " + std::to_string(j) + " label out of range at scale " +
                               std::to_string(s));
    }
    for (int s = 0; s + 1 < t.num_scales; ++s) {
      if (t.parent[s][chain[s]] != chain[s + 1])
        throw NestingViolation("sample " + std::to_string(j) +
                               " chain inconsistent with parent map at scale " +
                               std::to_string(s));
    }
  }
}

// ---------------------------------------------------------------------------
// Synthetic generation
// ---------------------------------------------------------------------------

namespace {

Vec random_unit(Rng& rng, int d) {
  Vec v(d);
  double n = 0.0;
  do {
    for (int i = 0; i < d; ++i) v[i] = rng.normal();
    n = norm2(v.data(), v.size());
  } while (n < 1e-12);
  scale_inplace(1.0 / n, v.data(), v.size());
  return v;
}

// Centers for one split, given the shared coarse centers. Returned per scale,
// fine first, indexed by the split-local class id.
std::vector<std::vector<Vec>> split_centers(const Taxonomy& split_tax,
                                            const std::vector<Vec>& coarse_centers,
                                            const std::vector<double>& sigma, int d, Rng& rng) {
  const int m = split_tax.num_scales;
  std::vector<std::vector<Vec>> centers(m);
  centers[m - 1] = coarse_centers;
  for (int s = m - 2; s >= 0; --s) {
    const double step = sigma[static_cast<std::size_t>(m - 2 - s)];
    centers[s].resize(split_tax.classes_per_scale[s]);
    for (int c = 0; c < split_tax.classes_per_scale[s]; ++c) {
      Vec v = centers[s + 1][split_tax.parent[s][c]];
      for (int i = 0; i < d; ++i) v[i] += step * rng.normal();
      const double n = norm2(v.data(), v.size());
      if (n < 1e-12) throw InvalidSpec("degenerate center (noise cancelled the parent)");
      scale_inplace(1.0 / n, v.data(), v.size());
      centers[s][c] = std::move(v);
    }
  }
  return centers;
}

}  // namespace

std::pair<Dataset, Dataset> generate_synthetic(const SynthSpec& spec) {
  const int m = static_cast<int>(spec.branching.size());
  if (m < 1) throw InvalidSpec("branching list is empty");
  if (spec.branching[0] < 1) throw InvalidSpec("coarse scale needs at least one class");
  for (int i = 1; i < m; ++i)
    if (spec.branching[i] < 2)
      throw InvalidSpec("branching < 2 at non-coarse scale " + std::to_string(i));
  if (static_cast<int>(spec.sigma.size()) != m - 1)
    throw InvalidSpec("need " + std::to_string(m - 1) + " sigma entries, got " +
                      std::to_string(spec.sigma.size()));
  for (std::size_t i = 0; i + 1 < spec.sigma.size(); ++i)
    if (!(spec.sigma[i] > spec.sigma[i + 1]))
      throw InvalidSpec("per-scale sigmas must strictly decrease from coarse to fine");
  for (double s : spec.sigma)
    if (!(s >= 0.0)) throw InvalidSpec("negative sigma");
  if (spec.sigma_sample < 0.0) throw InvalidSpec("negative sigma_sample");
  if (spec.samples_per_fine_class < 1) throw InvalidSpec("samples_per_fine_class < 1");
  if (spec.d_in < 2) throw InvalidSpec("d_in < 2");

  const Taxonomy split_tax = nested_taxonomy(spec.branching);
  const int coarse_count = split_tax.classes_per_scale[m - 1];

  // Union taxonomy over both splits: coarse ids shared, every finer scale
  // holds a train block followed by a test block of fresh ids. For M=1 the
  // single scale is open-set, so the blocks are disjoint there too.
  std::vector<int> counts(m);
  for (int s = 0; s < m; ++s)
    counts[s] = (m > 1 && s == m - 1) ? coarse_count : 2 * split_tax.classes_per_scale[s];
  std::vector<std::vector<int>> parents(std::max(0, m - 1));
  for (int s = 0; s + 1 < m; ++s) {
    parents[s].resize(counts[s]);
    const int block = split_tax.classes_per_scale[s];
    const int parent_block = (s + 1 == m - 1) ? 0 : split_tax.classes_per_scale[s + 1];
    for (int c = 0; c < block; ++c) {
      parents[s][c] = split_tax.parent[s][c];
      parents[s][block + c] = split_tax.parent[s][c] + parent_block;
    }
  }
  const Taxonomy union_tax = build_taxonomy(counts, parents);

  Rng rng(derive_seed(spec.seed, 0xDA7A5E7ULL));
  std::vector<Vec> coarse_centers(coarse_count);
  for (int c = 0; c < coarse_count; ++c) coarse_centers[c] = random_unit(rng, spec.d_in);

  // Test subtrees are fresh draws; for M=1 fresh coarse centers as well.
  const auto train_centers = split_centers(split_tax, coarse_centers, spec.sigma, spec.d_in, rng);
  std::vector<Vec> test_coarse = coarse_centers;
  if (m == 1) {
    for (int c = 0; c < coarse_count; ++c) test_coarse[c] = random_unit(rng, spec.d_in);
  }
  const auto test_centers = split_centers(split_tax, test_coarse, spec.sigma, spec.d_in, rng);

  auto emit = [&](const std::vector<std::vector<Vec>>& centers, bool test_block) {
    Dataset ds;
    ds.taxonomy = union_tax;
    ds.split = test_block ? Split::test : Split::train;
    const int fine_count = split_tax.classes_per_scale[0];
    ds.samples.reserve(static_cast<std::size_t>(fine_count) * spec.samples_per_fine_class);
    for (int f = 0; f < fine_count; ++f) {
      std::vector<std::int32_t> chain(m);
      for (int s = 0; s < m; ++s) {
        int c = split_tax.ancestor(f, s);
        if (test_block && !(m > 1 && s == m - 1)) c += split_tax.classes_per_scale[s];
        chain[s] = c;
      }
      for (int k = 0; k < spec.samples_per_fine_class; ++k) {
        Sample sample;
        sample.labels = chain;
        sample.features.resize(spec.d_in);
        for (int i = 0; i < spec.d_in; ++i)
          sample.features[i] =
              static_cast<float>(centers[0][f][i] + spec.sigma_sample * rng.normal());
        ds.samples.push_back(std::move(sample));
      }
    }
    return ds;
  };

  Dataset train = emit(train_centers, false);
  Dataset test = emit(test_centers, true);
  validate_dataset(train);
  validate_dataset(test);
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Container IO
// ---------------------------------------------------------------------------

void write_dataset(const std::string& path, const Dataset& ds) {
  BinWriter w(path);
  w.magic("DYML1");
  const int m = ds.taxonomy.num_scales;
  w.u32(static_cast<std::uint32_t>(ds.d_in()));
  w.u32(static_cast<std::uint32_t>(m));
  for (int s = 0; s < m; ++s) w.u32(static_cast<std::uint32_t>(ds.taxonomy.classes_per_scale[s]));
  w.u32(static_cast<std::uint32_t>(ds.samples.size()));
  for (const auto& sample : ds.samples) {
    for (float f : sample.features) w.f32(f);
    for (std::int32_t l : sample.labels) w.i32(l);
  }
  w.close();
}

Dataset read_dataset(const std::string& path, Split split) {
  BinReader r(path);
  r.expect_magic("DYML1");
  const int d_in = static_cast<int>(r.u32());
  const int m = static_cast<int>(r.u32());
  if (m < 1 || m > 64) throw IoError("implausible scale count in " + path);
  std::vector<int> counts(m);
  for (int s = 0; s < m; ++s) counts[s] = static_cast<int>(r.u32());
  const std::uint32_t n = r.u32();

  Dataset ds;
  ds.split = split;
  ds.samples.resize(n);
  std::vector<std::vector<std::int32_t>> chains(n);
  for (std::uint32_t j = 0; j < n; ++j) {
    auto& s = ds.samples[j];
    s.features.resize(d_in);
    for (int i = 0; i < d_in; ++i) s.features[i] = r.f32();
    s.labels.resize(m);
    for (int i = 0; i < m; ++i) s.labels[i] = r.i32();
    chains[j] = s.labels;
  }
  ds.taxonomy = taxonomy_from_observations(counts, chains);
  validate_dataset(ds);
  return ds;
}

void export_csv(const std::string& path, const Dataset& ds) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw IoError("cannot open for write: " + path);
  for (const auto& sample : ds.samples) {
    for (std::size_t i = 0; i < sample.features.size(); ++i)
      std::fprintf(f, "%s%.9g", i ? "," : "", static_cast<double>(sample.features[i]));
    for (std::int32_t l : sample.labels) std::fprintf(f, ",%d", l);
    std::fprintf(f, "\n");
  }
  if (std::fclose(f) != 0) throw IoError("write failed: " + path);
}

Dataset import_csv(const std::string& path, int num_scales, Split split) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for read: " + path);
  Dataset ds;
  ds.split = split;
  std::string line;
  std::vector<std::vector<std::int32_t>> chains;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (static_cast<int>(cells.size()) <= num_scales)
      throw IoError("row with no feature columns in " + path);
    Sample s;
    const std::size_t d = cells.size() - static_cast<std::size_t>(num_scales);
    s.features.resize(d);
    for (std::size_t i = 0; i < d; ++i) s.features[i] = std::strtof(cells[i].c_str(), nullptr);
    s.labels.resize(num_scales);
    for (int i = 0; i < num_scales; ++i)
      s.labels[i] = static_cast<std::int32_t>(std::strtol(cells[d + i].c_str(), nullptr, 10));
    chains.push_back(s.labels);
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.empty()) throw EmptyDataset("no rows in " + path);
  std::vector<int> counts(num_scales, 0);
  for (const auto& c : chains)
    for (int s = 0; s < num_scales; ++s) counts[s] = std::max(counts[s], c[s] + 1);
  ds.taxonomy = taxonomy_from_observations(counts, chains);
  validate_dataset(ds);
  return ds;
}

}  // namespace dyml
