#include "streamcache/pipeline_executor.hpp"

#include <chrono>
#include <map>
#include <random>
#include <stdexcept>
#include <thread>

namespace streamcache {
namespace {

struct LatentSnapshot {
  std::int64_t chunk = 0;
  std::uint64_t version = 0;
  std::vector<std::int64_t> frames;
};

struct Decoded {
  std::int64_t chunk = 0;
  bool intact = true;
};

std::vector<std::int64_t> expected_frames(std::int64_t chunk, int c, int overlap) {
  std::vector<std::int64_t> out;
  for (std::int64_t f = std::max<std::int64_t>(0, chunk * c - overlap); f < chunk * c + c; ++f) out.push_back(f);
  return out;
}

}  // namespace

ExecutorReport run_threaded_pipeline(const ExecutorOptions& opts) {
  if (opts.queue_depth < 1) throw std::invalid_argument("queue_depth must be >= 1");
  if (opts.n_chunks < 1) throw std::invalid_argument("n_chunks must be >= 1");

  BoundedChannel<LatentSnapshot> jobs(opts.queue_depth);
  // The writer drains this promptly; its capacity only has to cover the
  // decode queue plus the item being decoded.
  BoundedChannel<Decoded> results(opts.queue_depth + 1);

  ExecutorReport report;
  std::mutex report_mu;

  std::thread producer([&] {
    std::vector<std::int64_t> working;  // overwritten every chunk
    std::uint64_t version = 0;
    for (std::int64_t i = 0; i < opts.n_chunks; ++i) {
      if (opts.produce_delay_us > 0) std::this_thread::sleep_for(std::chrono::microseconds(opts.produce_delay_us));
      working = expected_frames(i, opts.chunk_latent_frames, opts.overlap_frames);
      ++version;
      LatentSnapshot snap{i, version, working};  // clone before hand-off
      const auto info = jobs.push(std::move(snap));
      std::lock_guard lock(report_mu);
      if (info.stalled) ++report.stall_count;
      if (info.stalled != (info.occupancy_before >= opts.queue_depth)) report.stalls_match_full_queue = false;
      working.assign(working.size(), -1);  // scribble over the working window
    }
    jobs.close();
  });

  std::thread consumer([&] {
    std::mt19937_64 rng(opts.seed);
    while (auto snap = jobs.pop()) {
      if (opts.max_decode_delay_us > 0) {
        const auto delay = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(opts.max_decode_delay_us + 1));
        std::this_thread::sleep_for(std::chrono::microseconds(delay));
      }
      const bool intact = snap->frames == expected_frames(snap->chunk, opts.chunk_latent_frames, opts.overlap_frames) &&
                          snap->version == static_cast<std::uint64_t>(snap->chunk + 1);
      results.push({snap->chunk, intact});
    }
    results.close();
  });

  std::map<std::int64_t, Decoded> reorder;
  std::int64_t next = 0;
  while (auto done = results.pop()) {
    reorder.emplace(done->chunk, *done);
    for (auto it = reorder.find(next); it != reorder.end(); it = reorder.find(next)) {
      if (!it->second.intact) report.snapshots_intact = false;
      report.emission_indices.push_back(next);
      reorder.erase(it);
      ++next;
    }
  }

  producer.join();
  consumer.join();
  report.max_queue_occupancy = jobs.max_occupancy();
  return report;
}

}  // namespace streamcache
