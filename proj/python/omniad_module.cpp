/* Copyright 2026 The Omni-AD Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Python bindings for the core library. Arrays cross the boundary as float64
// numpy arrays; errors map onto Python exception types.

#include <optional>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "omniad/anomaly.hpp"
#include "omniad/bench.hpp"
#include "omniad/errors.hpp"
#include "omniad/io.hpp"
#include "omniad/metrics.hpp"
#include "omniad/omni_block.hpp"
#include "omniad/ops.hpp"
#include "omniad/pipeline.hpp"

namespace py = pybind11;
using namespace omniad;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  const double* p = a.data();
  return Tensor(std::move(shape), std::vector<double>(p, p + a.size()));
}

Array to_array(const Tensor& t) {
  Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

std::vector<std::uint8_t> to_labels(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a) {
  return {a.data(), a.data() + a.size()};
}

std::vector<double> to_scores(const Array& a) { return {a.data(), a.data() + a.size()}; }

py::dict report_dict(const metrics::EvalReport& r) {
  py::dict d;
  const auto vals = r.values();
  for (std::size_t i = 0; i < vals.size(); ++i) {
    if (vals[i]) d[metrics::kReportColumns[i]] = *vals[i];
  }
  d["mad"] = metrics::mad(r);
  return d;
}

}  // namespace

PYBIND11_MODULE(_omniad, m) {
  m.doc() = "Omni-AD reconstruction anomaly detection core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<UndefinedMetricError>(m, "UndefinedMetricError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_IOError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_RuntimeError);

  // ---- tensor ops ----
  m.def("matmul", [](const Array& a, const Array& b) { return to_array(ops::matmul(to_tensor(a), to_tensor(b))); });
  m.def("softmax_rows", [](const Array& x) { return to_array(ops::softmax_rows(to_tensor(x))); });
  m.def("layer_norm", [](const Array& x, const Array& g, const Array& b) {
    return to_array(ops::layer_norm(to_tensor(x), to_tensor(g), to_tensor(b)));
  });
  m.def("depthwise_conv2d",
        [](const Array& x, const Array& k) { return to_array(ops::depthwise_conv2d(to_tensor(x), to_tensor(k))); });
  m.def("bilinear_resize", [](const Array& x, std::size_t h, std::size_t w) {
    return to_array(ops::bilinear_resize(to_tensor(x), h, w));
  });
  m.def(
      "multi_head_attention",
      [](const Array& q, const Array& k, const Array& v, const Array& wq, const Array& wk, const Array& wv,
         const Array& wo, std::size_t heads) {
        const ops::MhaWeights w{to_tensor(wq), to_tensor(wk), to_tensor(wv), to_tensor(wo)};
        return to_array(ops::multi_head_attention(to_tensor(q), to_tensor(k), to_tensor(v), w, heads));
      },
      py::arg("q"), py::arg("k"), py::arg("v"), py::arg("wq"), py::arg("wk"), py::arg("wv"), py::arg("wo"),
      py::arg("heads"));

  // ---- block sizes ----
  m.def("global_branch_parameter_count", [](std::size_t dim, std::size_t tokens, const std::string& order) {
    return global_branch_parameter_count(dim, tokens, parse_decouple_order(order));
  });
  m.def("local_branch_parameter_count", &local_branch_parameter_count);
  m.def("attention_flop_count", [](std::uint64_t n, std::uint64_t t, std::uint64_t d, std::uint64_t heads) {
    const auto f = attention_flop_count(n, t, d, heads);
    return py::make_tuple(f.learnable_token, f.standard);
  });

  // ---- metrics ----
  m.def("auroc", [](const py::array_t<std::uint8_t>& l, const Array& s) {
    return metrics::auroc(to_labels(l), to_scores(s));
  });
  m.def("average_precision", [](const py::array_t<std::uint8_t>& l, const Array& s) {
    return metrics::average_precision(to_labels(l), to_scores(s));
  });
  m.def("f1_max", [](const py::array_t<std::uint8_t>& l, const Array& s) {
    return metrics::f1_max(to_labels(l), to_scores(s));
  });
  m.def(
      "aupro",
      [](const std::vector<py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>>& masks,
         const std::vector<Array>& maps, double fpr_cap) {
        if (masks.size() != maps.size()) throw DimensionError("aupro: masks and maps differ in count");
        std::vector<metrics::MaskedMap> items;
        for (std::size_t i = 0; i < masks.size(); ++i) {
          if (masks[i].ndim() != 2 || maps[i].ndim() != 2) throw DimensionError("aupro: expected 2-D arrays");
          items.push_back({static_cast<std::size_t>(masks[i].shape(0)), static_cast<std::size_t>(masks[i].shape(1)),
                           to_labels(masks[i]), to_scores(maps[i])});
        }
        return metrics::aupro(items, fpr_cap);
      },
      py::arg("masks"), py::arg("maps"), py::arg("fpr_cap") = 0.3);
  m.def("mad", [](const std::vector<double>& v) {
    if (v.size() != 7) throw DimensionError("mad: expected 7 values");
    return metrics::mad(metrics::EvalReport{v[0], v[1], v[2], v[3], v[4], v[5], v[6]});
  });

  // ---- anomaly maps ----
  m.def("cosine_distance_map", [](const Array& a, const Array& b) {
    return to_array(cosine_distance_map(to_tensor(a), to_tensor(b)));
  });
  m.def("gaussian_blur", [](const Array& map, double sigma) { return to_array(gaussian_blur(to_tensor(map), sigma)); });

  // ---- io ----
  m.def(
      "encode_tensor",
      [](const Array& a, std::uint32_t version) {
        const auto bytes = io::encode_tensor(to_tensor(a), version);
        return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
      },
      py::arg("array"), py::arg("version") = io::kFormatFloat32);
  m.def("decode_tensor", [](const py::bytes& b) {
    const std::string s = b;
    return to_array(io::decode_tensor(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size())));
  });
  m.def("read_tensor_file", [](const std::filesystem::path& p) { return to_array(io::read_tensor_file(p)); });
  m.def(
      "write_tensor_file",
      [](const std::filesystem::path& p, const Array& a, std::uint32_t version) {
        io::write_tensor_file(p, to_tensor(a), version);
      },
      py::arg("path"), py::arg("array"), py::arg("version") = io::kFormatFloat32);

  // ---- configuration and pipeline ----
  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_static("parse", &RunConfig::parse)
      .def_static("from_file", &RunConfig::from_file)
      .def_static("keys", &RunConfig::keys)
      .def("serialize", &RunConfig::serialize)
      .def("set", &RunConfig::set)
      .def("validate", &RunConfig::validate)
      .def("__eq__", [](const RunConfig& a, const RunConfig& b) { return a == b; });

  m.def(
      "train_and_evaluate",
      [](const RunConfig& cfg, const std::string& checkpoint_dir) {
        cfg.validate();
        std::optional<TrainResult> r;
        std::optional<EvalResult> e;
        {
          py::gil_scoped_release release;
          const SyntheticCorpus corpus = generate_corpus(cfg);
          const FeatureCache features = FeatureCache::build(cfg.network, corpus);
          r.emplace(train(cfg, features));
          e.emplace(evaluate(r->checkpoint.model, cfg.eval, corpus, features, cfg.train.batch_size));
          if (!checkpoint_dir.empty()) save_checkpoint(checkpoint_dir, r->checkpoint);
        }
        py::dict out;
        out["losses"] = r->losses;
        out["report"] = report_dict(e->report);
        out["decoder_parameters"] = r->checkpoint.model.decoder_parameter_count();
        return out;
      },
      py::arg("config"), py::arg("checkpoint_dir") = "");
  m.def(
      "evaluate_checkpoint",
      [](const std::filesystem::path& dir, double sigma) {
        const Checkpoint ck = load_checkpoint(dir);
        EvalConfig ev = ck.config.eval;
        if (sigma >= 0.0) ev.sigma = sigma;
        const SyntheticCorpus corpus = generate_corpus(ck.config);
        const FeatureCache features = FeatureCache::build(ck.config.network, corpus);
        const EvalResult e = evaluate(ck.model, ev, corpus, features, ck.config.train.batch_size);
        py::dict out;
        out["report"] = report_dict(e.report);
        py::list maps;
        for (const auto& a : e.maps) maps.append(to_array(a.map));
        out["maps"] = maps;
        return out;
      },
      py::arg("checkpoint_dir"), py::arg("sigma") = -1.0);
  m.def("decoder_parameter_count",
        [](const RunConfig& cfg) { return decoder_parameter_count_formula(cfg.network); });

  m.def(
      "bench_attention",
      [](std::vector<std::size_t> sizes, std::size_t tokens, std::size_t dim, std::size_t heads, std::size_t repeats,
         std::uint64_t seed) {
        BenchOptions b;
        b.sizes = std::move(sizes);
        b.tokens = tokens;
        b.dim = dim;
        b.heads = heads;
        b.repeats = repeats;
        b.seed = seed;
        py::list out;
        for (const BenchRow& r : bench_attention(b)) {
          py::dict d;
          d["n"] = r.n;
          d["learnable_core_ms"] = r.learnable_core_ms;
          d["learnable_full_ms"] = r.learnable_full_ms;
          d["standard_core_ms"] = r.standard_core_ms;
          d["standard_full_ms"] = r.standard_full_ms;
          d["flop_ratio"] = r.flop_ratio;
          out.append(d);
        }
        return out;
      },
      py::arg("sizes"), py::arg("tokens") = 64, py::arg("dim") = 256, py::arg("heads") = 4, py::arg("repeats") = 3,
      py::arg("seed") = 0);
}
