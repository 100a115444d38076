#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "pafa/dense.hpp"
#include "pafa/manifest.hpp"

namespace pafa {

class FeatureStore {
 public:
  virtual ~FeatureStore() = default;
  virtual const MatrixX<float>& get(const std::string& sample_id) const = 0;
};

class InMemoryFeatureStore : public FeatureStore {
 public:
  void add(const std::string& sample_id, MatrixX<float> features) {
    features_[sample_id] = std::move(features);
  }
  const MatrixX<float>& get(const std::string& sample_id) const override;
  std::size_t size() const { return features_.size(); }

 private:
  std::map<std::string, MatrixX<float>> features_;
};

// Reads <sample_id>.pafb files from a cache directory, memoizing loads.
class CachedFeatureStore : public FeatureStore {
 public:
  explicit CachedFeatureStore(std::filesystem::path dir) : dir_(std::move(dir)) {}
  const MatrixX<float>& get(const std::string& sample_id) const override;

 private:
  std::filesystem::path dir_;
  mutable std::map<std::string, MatrixX<float>> memo_;
};

// Runs the front end for every manifest row and writes one cache file per
// sample. source_path entries are resolved relative to the manifest's
// directory. Extraction parallelizes across samples without affecting
// output bytes. Returns the number of samples written (existing cache
// entries are kept).
std::size_t extract_features(const Manifest& manifest, const std::filesystem::path& manifest_dir,
                             const std::filesystem::path& cache_dir, int jobs = 1);

}  // namespace pafa
