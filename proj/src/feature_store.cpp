#include "pafa/feature_store.hpp"

#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

#include "pafa/errors.hpp"
#include "pafa/features.hpp"
#include "pafa/wav.hpp"

namespace pafa {

const MatrixX<float>& InMemoryFeatureStore::get(const std::string& sample_id) const {
  auto it = features_.find(sample_id);
  if (it == features_.end()) throw DataError("no features for sample '" + sample_id + "'");
  return it->second;
}

const MatrixX<float>& CachedFeatureStore::get(const std::string& sample_id) const {
  auto it = memo_.find(sample_id);
  if (it != memo_.end()) return it->second;
  const auto path = dir_ / (sample_id + ".pafb");
  auto [inserted, ok] = memo_.emplace(sample_id, read_feature_cache(path));
  return inserted->second;
}

std::size_t extract_features(const Manifest& manifest, const std::filesystem::path& manifest_dir,
                             const std::filesystem::path& cache_dir, int jobs) {
  std::filesystem::create_directories(cache_dir);
  jobs = std::max(1, jobs);

  struct Item {
    const SampleMeta* meta;
    std::filesystem::path out;
  };
  std::vector<Item> todo;
  for (const auto& row : manifest.rows) {
    auto out = cache_dir / (row.sample_id + ".pafb");
    if (!std::filesystem::exists(out)) todo.push_back({&row, std::move(out)});
  }

  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::string first_error;
  std::mutex error_mutex;

  auto worker = [&] {
    while (!failed.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= todo.size()) return;
      const auto& item = todo[i];
      try {
        std::filesystem::path src(item.meta->source_path);
        if (src.is_relative()) src = manifest_dir / src;
        WaveBuffer wav = read_wav(src);
        const auto start = static_cast<std::size_t>(
            std::llround(item.meta->cycle_start_s * wav.rate_hz));
        const auto end = std::min(
            wav.samples.size(),
            static_cast<std::size_t>(std::llround(item.meta->cycle_end_s * wav.rate_hz)));
        if (start >= end)
          throw DataError("cycle bounds select no samples for '" + item.meta->sample_id + "'");
        WaveBuffer cycle;
        cycle.rate_hz = wav.rate_hz;
        cycle.samples.assign(wav.samples.begin() + static_cast<std::ptrdiff_t>(start),
                             wav.samples.begin() + static_cast<std::ptrdiff_t>(end));
        const auto features = log_mel_fbank(fix_length(resample(cycle)));
        write_feature_cache(item.out, features);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!failed.exchange(true))
          first_error = std::string(e.what()) + " (sample '" + item.meta->sample_id + "')";
      }
    }
  };

  if (jobs == 1 || todo.size() < 2) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int j = 0; j < jobs; ++j) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (failed.load()) throw DataError("feature extraction failed: " + first_error);
  return todo.size();
}

}  // namespace pafa
