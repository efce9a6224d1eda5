#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "streamcache/attention_ref.hpp"
#include "streamcache/config.hpp"
#include "streamcache/mask.hpp"
#include "streamcache/pipeline_sim.hpp"
#include "streamcache/prompt.hpp"
#include "streamcache/rope_cache.hpp"
#include "streamcache/state_loop.hpp"

namespace py = pybind11;
namespace sc = streamcache;

namespace {

std::vector<std::vector<bool>> to_rows(const sc::BoolMatrix& m) {
  std::vector<std::vector<bool>> rows(m.rows(), std::vector<bool>(m.cols()));
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) rows[r][c] = m.at(r, c);
  return rows;
}

py::dict step_to_dict(const sc::RolloutStep& s) {
  py::dict d;
  d["p_abs"] = s.p_abs_t;
  d["delta"] = s.delta;
  d["target_local"] = s.target_local;
  d["abs_indices"] = s.abs_indices;
  d["positions"] = s.locals;
  d["scores"] = s.scores;
  d["output"] = s.output;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bounded-RoPE KV cache, attention masks, decode pipeline simulator and entity-state loop.";

  py::class_<sc::StreamConfig>(m, "StreamConfig")
      .def(py::init<>())
      .def_readwrite("k_sink", &sc::StreamConfig::k_sink)
      .def_readwrite("k_recent", &sc::StreamConfig::k_recent)
      .def_readwrite("k_noisy", &sc::StreamConfig::k_noisy)
      .def_readwrite("cap_c", &sc::StreamConfig::cap_c)
      .def_readwrite("tokens_per_frame", &sc::StreamConfig::tokens_per_frame)
      .def_readwrite("head_dim", &sc::StreamConfig::head_dim)
      .def_readwrite("rope_base", &sc::StreamConfig::rope_base)
      .def_readwrite("temporal_compression", &sc::StreamConfig::temporal_compression)
      .def_readwrite("target_fps", &sc::StreamConfig::target_fps)
      .def("__eq__", [](const sc::StreamConfig& a, const sc::StreamConfig& b) { return a == b; })
      .def("__repr__", [](const sc::StreamConfig& c) {
        return "StreamConfig(k_sink=" + std::to_string(c.k_sink) + ", k_recent=" + std::to_string(c.k_recent) +
               ", k_noisy=" + std::to_string(c.k_noisy) + ", cap_c=" + std::to_string(c.cap_c) + ")";
      });

  m.def("validate_config", &sc::validate_config, py::arg("cfg"),
        "Return the config unchanged, or raise ValueError naming the first violated invariant.");
  m.def("load_stream_config", &sc::load_stream_config, py::arg("path"), py::arg("validate") = true);
  m.def("parse_stream_config", &sc::parse_stream_config, py::arg("yaml_text"), py::arg("validate") = true);

  m.def("compute_delta", &sc::compute_delta, py::arg("p_abs_t"), py::arg("cap_c"));
  m.def("rope_rotate",
        [](const std::vector<double>& v, std::int64_t pos, const sc::StreamConfig& cfg) { return sc::rope_rotate(v, pos, cfg); },
        py::arg("v"), py::arg("position"), py::arg("cfg"));

  m.def(
      "run_rollout",
      [](const sc::StreamConfig& cfg, std::uint64_t seed, std::int64_t steps, const std::string& variant) {
        const auto trace = sc::run_rollout(cfg, seed, steps, sc::parse_attention_variant(variant));
        py::list out;
        for (const auto& s : trace.records) out.append(step_to_dict(s));
        return out;
      },
      py::arg("cfg"), py::arg("seed"), py::arg("steps"), py::arg("variant") = "decoupled",
      "Stream `steps` queries through one attention path and return one dict per step.");
  m.def(
      "rollout_difference",
      [](const sc::StreamConfig& cfg, std::uint64_t seed, std::int64_t steps, const std::string& a, const std::string& b) {
        return sc::step_differences(sc::run_rollout(cfg, seed, steps, sc::parse_attention_variant(a)),
                                    sc::run_rollout(cfg, seed, steps, sc::parse_attention_variant(b)));
      },
      py::arg("cfg"), py::arg("seed"), py::arg("steps"), py::arg("a") = "decoupled", py::arg("b") = "reference",
      "Per-step max-abs output difference between two attention paths.");

  m.def(
      "build_masks",
      [](const sc::StreamConfig& cfg, std::size_t text_len) {
        const auto masks = sc::build_masks(cfg, text_len);
        return py::make_tuple(to_rows(masks.self_mask), to_rows(masks.cross_mask));
      },
      py::arg("cfg"), py::arg("text_len"), "Return (self_mask, cross_mask) as nested lists of bools.");

  py::class_<sc::PipelineConfig>(m, "PipelineConfig")
      .def(py::init<>())
      .def_readwrite("backend", &sc::PipelineConfig::backend)
      .def_readwrite("chunk_latent_frames", &sc::PipelineConfig::chunk_latent_frames)
      .def_readwrite("overlap_frames", &sc::PipelineConfig::overlap_frames)
      .def_readwrite("queue_depth", &sc::PipelineConfig::queue_depth)
      .def_readwrite("dit_latency_ms", &sc::PipelineConfig::dit_latency_ms)
      .def_readwrite("vae_latency_ms", &sc::PipelineConfig::vae_latency_ms)
      .def_readwrite("write_latency_ms", &sc::PipelineConfig::write_latency_ms)
      .def_readwrite("contention_factor", &sc::PipelineConfig::contention_factor)
      .def_readwrite("temporal_compression", &sc::PipelineConfig::temporal_compression)
      .def_readwrite("target_fps", &sc::PipelineConfig::target_fps)
      .def_readwrite("dit_jitter_ms", &sc::PipelineConfig::dit_jitter_ms)
      .def_readwrite("vae_jitter_ms", &sc::PipelineConfig::vae_jitter_ms)
      .def_readwrite("jitter_seed", &sc::PipelineConfig::jitter_seed)
      .def_property(
          "schedule", [](const sc::PipelineConfig& c) { return sc::to_string(c.schedule); },
          [](sc::PipelineConfig& c, const std::string& s) { c.schedule = sc::parse_schedule(s); });

  py::class_<sc::SimResult>(m, "SimResult")
      .def_readonly("throughput_ms_per_chunk", &sc::SimResult::throughput_ms_per_chunk)
      .def_readonly("eff_fps", &sc::SimResult::eff_fps)
      .def_readonly("rt_ratio", &sc::SimResult::rt_ratio)
      .def_readonly("max_queue_occupancy", &sc::SimResult::max_queue_occupancy)
      .def_readonly("emission_indices", &sc::SimResult::emission_indices)
      .def_readonly("vae_input_frames", &sc::SimResult::vae_input_frames)
      .def_readonly("retained_pixel_frames", &sc::SimResult::retained_pixel_frames)
      .def_property_readonly("stalls", [](const sc::SimResult& r) {
        std::size_t n = 0;
        for (const auto& s : r.submits) n += s.stalled ? 1 : 0;
        return n;
      });

  m.def("simulate", &sc::simulate, py::arg("cfg"), py::arg("n_chunks"));
  m.def("chunk_playback_ms", &sc::chunk_playback_ms, py::arg("cfg"));
  m.def(
      "derived_metrics",
      [](double throughput_ms, const sc::PipelineConfig& cfg) {
        const auto d = sc::derived_metrics(throughput_ms, cfg);
        return py::make_tuple(d.eff_fps, d.rt_ratio);
      },
      py::arg("throughput_ms"), py::arg("cfg"), "Return (eff_fps, rt_ratio).");
  m.def("calibrate_contention", &sc::calibrate_contention, py::arg("cfg"), py::arg("target_throughput_ms"),
        py::arg("n_chunks"), py::arg("max_factor") = 8.0, py::arg("tol_ms") = 1e-6);
  m.def(
      "sweep_file",
      [](const std::filesystem::path& path, const std::string& fmt) {
        const auto spec = sc::load_pipeline_spec(path);
        const auto rows = sc::sweep(spec.base, spec.grid, spec.n_chunks);
        return fmt == "csv" ? sc::sweep_to_csv(rows) : sc::sweep_to_jsonl(rows);
      },
      py::arg("path"), py::arg("format") = "jsonl");

  m.def(
      "format_prompt",
      [](const std::vector<std::pair<std::string, std::string>>& slots) {
        sc::ActionPrompt p;
        for (const auto& [entity, action] : slots) p.slots.push_back({entity, action});
        return sc::format_prompt(p);
      },
      py::arg("slots"), "Render [(entity, action), ...] as one prompt string.");

  py::register_exception<sc::ParseError>(m, "ParseError", PyExc_ValueError);

  m.def(
      "run_episode",
      [](const std::filesystem::path& trace, const std::filesystem::path& policy,
         const std::map<std::string, std::int64_t>& initial_hp, bool loop_enabled) {
        const auto log = sc::run_episode(sc::observe_trace_file(trace), sc::load_policy(policy), initial_hp, loop_enabled);
        py::dict d;
        d["terminal_triggered"] = log.terminal_triggered;
        d["terminal_window"] = log.terminal_window ? py::cast(*log.terminal_window) : py::none();
        d["terminal_entity"] = log.terminal_entity ? py::cast(*log.terminal_entity) : py::none();
        d["final_hp"] = log.final_state.hp;
        py::list prompts;
        for (const auto& w : log.windows)
          for (const auto& inj : w.injections) prompts.append(py::make_tuple(w.window_index, inj.entity, inj.prompt));
        d["injections"] = prompts;
        return d;
      },
      py::arg("trace"), py::arg("policy"), py::arg("initial_hp") = std::map<std::string, std::int64_t>{},
      py::arg("loop_enabled") = true);

  m.attr("__version__") = "0.1.0";
}
