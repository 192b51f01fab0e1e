#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "byteprobe/attrib.hpp"
#include "byteprobe/cluster.hpp"
#include "byteprobe/cnn.hpp"
#include "byteprobe/corpus.hpp"
#include "byteprobe/errors.hpp"
#include "byteprobe/pe.hpp"
#include "byteprobe/probe.hpp"
#include "byteprobe/train.hpp"
#include "byteprobe/x86.hpp"

namespace py = pybind11;
using namespace byteprobe;

namespace {

std::vector<std::uint8_t> to_bytes(const py::bytes& b) {
  const std::string s = b;
  return std::vector<std::uint8_t>(s.begin(), s.end());
}

py::dict pe_to_dict(const PeImage& pe) {
  py::dict d;
  d["file_size"] = pe.file_size;
  d["machine"] = pe.machine;
  d["pe32_plus"] = pe.pe32_plus;
  d["checksum_value"] = pe.checksum_value;
  d["checksum_offset"] = pe.checksum_offset;
  d["overlay_start"] = pe.overlay_start;
  d["warnings"] = pe.warnings;
  py::list sections;
  for (const SectionInfo& s : pe.sections) {
    py::dict sd;
    sd["name"] = s.name;
    sd["virtual_address"] = s.virtual_address;
    sd["virtual_size"] = s.virtual_size;
    sd["raw_offset"] = s.raw_offset;
    sd["raw_size"] = s.raw_size;
    sections.append(sd);
  }
  d["sections"] = sections;
  py::list imports;
  for (const ImportedDll& dll : pe.imports) {
    py::dict id_;
    id_["dll"] = dll.dll_name;
    py::list fns;
    for (const ImportedFunction& fn : dll.functions) {
      py::dict fd;
      fd["name"] = fn.name;
      fd["offset"] = fn.name_offset;
      fns.append(fd);
    }
    id_["functions"] = fns;
    imports.append(id_);
  }
  d["imports"] = imports;
  d["export_names"] = pe.export_names;
  if (pe.rich) {
    py::dict rd;
    rd["xor_key"] = pe.rich->xor_key;
    rd["start"] = pe.rich->start;
    rd["end"] = pe.rich->end;
    py::list entries;
    for (const RichEntry& e : pe.rich->entries) {
      entries.append(py::make_tuple(e.product_id, e.build_id, e.use_count));
    }
    rd["entries"] = entries;
    d["rich"] = rd;
  } else {
    d["rich"] = py::none();
  }
  return d;
}

}  // namespace

PYBIND11_MODULE(_byteprobe, m) {
  m.doc() = "byte-level CNN malware classifier and activation analysis";

  py::register_exception<Error>(m, "ByteprobeError");

  // --- model ---
  py::class_<LayerConfig>(m, "LayerConfig")
      .def(py::init<>())
      .def_readwrite("filters", &LayerConfig::filters)
      .def_readwrite("kernel_width", &LayerConfig::kernel_width)
      .def_readwrite("pool_width", &LayerConfig::pool_width)
      .def_readwrite("pool_stride", &LayerConfig::pool_stride);

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_static("desk_default", &ModelConfig::desk_default)
      .def_static("paper_default", &ModelConfig::paper_default)
      .def_static("standard_dropout_rates", &ModelConfig::standard_dropout_rates)
      .def_readwrite("input_len", &ModelConfig::input_len)
      .def_readwrite("vocab", &ModelConfig::vocab)
      .def_readwrite("embed_dim", &ModelConfig::embed_dim)
      .def_readwrite("layers", &ModelConfig::layers)
      .def_readwrite("dropout_rates", &ModelConfig::dropout_rates)
      .def("stage_lengths", &ModelConfig::stage_lengths)
      .def("validate", &ModelConfig::validate);

  py::class_<CnnModel>(m, "CnnModel")
      .def_readonly("config", &CnnModel::config)
      .def("parameter_names", [](const CnnModel& model) {
        std::vector<std::string> names;
        for (const Parameter* p : model.parameters()) names.push_back(p->name);
        return names;
      })
      .def("embedding_rows", [](const CnnModel& model) {
        return model.embedding.tensor.data();
      });

  m.def("preprocess", [](const py::bytes& data, std::size_t input_len) {
    return preprocess(to_bytes(data), input_len);
  }, py::arg("data"), py::arg("input_len"));
  m.def("build_model", &build_model, py::arg("config"), py::arg("seed"));
  m.def("predict", [](const CnnModel& model, const py::bytes& data) {
    return predict(model, preprocess(to_bytes(data), model.config.input_len));
  }, py::arg("model"), py::arg("data"));
  m.def("save_model", &save_model, py::arg("model"), py::arg("path"));
  m.def("load_model", &load_model, py::arg("path"));

  // --- training / evaluation ---
  py::class_<LabeledSample>(m, "LabeledSample")
      .def(py::init([](const std::string& id, const py::bytes& data, int label) {
             return LabeledSample{id, to_bytes(data), label};
           }),
           py::arg("id"), py::arg("data"), py::arg("label"))
      .def_readwrite("id", &LabeledSample::id)
      .def_readwrite("label", &LabeledSample::label);

  py::class_<DecaySchedule>(m, "DecaySchedule")
      .def(py::init<>())
      .def_readwrite("factor", &DecaySchedule::factor)
      .def_readwrite("every_epochs", &DecaySchedule::every_epochs);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("momentum", &TrainConfig::momentum)
      .def_readwrite("decay", &TrainConfig::decay)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("regime", &TrainConfig::regime);

  py::class_<TrainHistory>(m, "TrainHistory")
      .def_readonly("train_loss", &TrainHistory::train_loss)
      .def_readonly("val_loss", &TrainHistory::val_loss);

  py::class_<Metrics>(m, "Metrics")
      .def_readonly("f1", &Metrics::f1)
      .def_readonly("auc", &Metrics::auc)
      .def_readonly("precision", &Metrics::precision)
      .def_readonly("recall", &Metrics::recall);

  m.def("train", [](CnnModel& model, const std::vector<LabeledSample>& train_set,
                    const std::vector<LabeledSample>& val_set, const TrainConfig& cfg) {
    return train(model, train_set, val_set, cfg);
  }, py::arg("model"), py::arg("train_set"), py::arg("val_set"), py::arg("config"));
  m.def("evaluate", &evaluate, py::arg("model"), py::arg("dataset"));

  // --- PE parsing ---
  m.def("parse_pe", [](const py::bytes& data) { return pe_to_dict(parse_pe(to_bytes(data))); },
        py::arg("data"));
  m.def("compute_checksum", [](const py::bytes& data, std::size_t field_offset) {
    return compute_checksum(to_bytes(data), field_offset);
  }, py::arg("data"), py::arg("field_offset"));
  m.def("regions", [](const py::bytes& data) {
    const auto bytes = to_bytes(data);
    PeImage pe = parse_pe(bytes);
    RegionMap map = RegionMap::build(pe);
    py::list out;
    for (const Region& r : map.regions()) {
      py::dict d;
      d["start"] = r.start;
      d["end"] = r.end;
      d["kind"] = region_kind_name(r.kind);
      d["detail"] = r.detail;
      out.append(d);
    }
    return out;
  }, py::arg("data"));
  m.def("region_at", [](const py::bytes& data, std::size_t offset) {
    const auto bytes = to_bytes(data);
    PeImage pe = parse_pe(bytes);
    RegionMap map = RegionMap::build(pe);
    const Region& r = map.at(offset);
    return py::make_tuple(region_kind_name(r.kind), r.detail);
  }, py::arg("data"), py::arg("offset"));

  // --- disassembly ---
  m.def("decode", [](const py::bytes& data, std::size_t offset, std::size_t max_instructions) {
    py::list out;
    for (const Instruction& i : decode_at(to_bytes(data), offset, max_instructions)) {
      py::dict d;
      d["offset"] = i.offset;
      d["length"] = i.length;
      d["text"] = i.text();
      out.append(d);
    }
    return out;
  }, py::arg("data"), py::arg("offset") = 0, py::arg("max_instructions") = 64);
  m.def("annotate_window", [](const py::bytes& data, std::size_t offset, std::size_t window) {
    const AnnotatedWindow w = annotate_window(to_bytes(data), offset, window);
    py::dict d;
    d["start"] = w.start;
    d["end"] = w.end;
    d["strings"] = w.string_view;
    py::list insns;
    for (const Instruction& i : w.instructions) insns.append(i.text());
    d["instructions"] = insns;
    return d;
  }, py::arg("data"), py::arg("offset"), py::arg("window"));

  // --- clustering / embedding analysis ---
  m.def("hdbscan", [](const std::vector<double>& points, std::size_t n, std::size_t dim,
                      std::size_t min_cluster_size, std::size_t min_samples) {
    const ClusterResult r = hdbscan_points(points, n, dim, min_cluster_size, min_samples);
    py::dict d;
    d["labels"] = r.labels;
    d["stabilities"] = r.stabilities;
    return d;
  }, py::arg("points"), py::arg("n"), py::arg("dim"), py::arg("min_cluster_size") = 2,
     py::arg("min_samples") = 1);
  m.def("mds", [](const std::vector<double>& distances, std::size_t n, std::size_t dim,
                  std::size_t max_iters) {
    DistanceMatrix dist;
    dist.n = n;
    dist.values = distances;
    MdsConfig cfg;
    cfg.dim = dim;
    cfg.max_iters = max_iters;
    const MdsResult r = mds_smacof(dist, cfg);
    py::dict d;
    d["coords"] = r.coords;
    d["stress"] = r.final_stress;
    d["stress_history"] = r.stress_history;
    return d;
  }, py::arg("distances"), py::arg("n"), py::arg("dim") = 2, py::arg("max_iters") = 300);
  m.def("embedding_outliers", [](const CnnModel& model) {
    const EmbeddingAnalysis a = embedding_outliers(model);
    py::list out;
    for (const EmbeddingPoint& p : a.points) {
      py::dict d;
      d["symbol"] = p.symbol;
      d["is_padding"] = p.is_padding;
      d["cluster"] = p.cluster;
      d["is_outlier"] = p.is_outlier;
      d["x"] = p.x;
      d["y"] = p.y;
      out.append(d);
    }
    return out;
  }, py::arg("model"));

  // --- activation probing ---
  m.def("top_k_activations", [](const CnnModel& model, const py::bytes& data, std::size_t k) {
    LabeledSample s{"sample", to_bytes(data), 0};
    py::list out;
    for (const ActivationRecord& r : top_k_activations(model, s, k)) {
      py::dict d;
      d["filter"] = r.filter;
      d["offset"] = r.offset;
      d["value"] = r.value;
      out.append(d);
    }
    return out;
  }, py::arg("model"), py::arg("data"), py::arg("k") = 100);

  // --- attribution ---
  py::class_<AttributionConfig>(m, "AttributionConfig")
      .def(py::init<>())
      .def_readwrite("n_samples", &AttributionConfig::n_samples)
      .def_readwrite("smoothing_sigma", &AttributionConfig::smoothing_sigma)
      .def_readwrite("seed", &AttributionConfig::seed);

  m.def("gradient_shap", [](const CnnModel& model, const py::bytes& data,
                            const std::vector<py::bytes>& backgrounds,
                            const AttributionConfig& cfg) {
    std::vector<std::vector<int>> bg;
    for (const py::bytes& b : backgrounds) {
      bg.push_back(preprocess(to_bytes(b), model.config.input_len));
    }
    const auto symbols = preprocess(to_bytes(data), model.config.input_len);
    const ByteAttribution attr = gradient_shap(model, symbols, bg, cfg);
    py::dict d;
    d["phi"] = attr.phi;
    d["model_output"] = attr.model_output;
    d["expected_background"] = attr.expected_background;
    py::list segs;
    for (const Segment& s : segment(attr)) {
      segs.append(py::make_tuple(s.start, s.end, s.value));
    }
    d["segments"] = segs;
    return d;
  }, py::arg("model"), py::arg("data"), py::arg("backgrounds"), py::arg("config"));

  // --- corpus ---
  py::class_<CorpusSpec>(m, "CorpusSpec")
      .def(py::init<>())
      .def_readwrite("count", &CorpusSpec::count)
      .def_readwrite("malware_ratio", &CorpusSpec::malware_ratio)
      .def_readwrite("label_noise", &CorpusSpec::label_noise)
      .def_readwrite("min_size", &CorpusSpec::min_size)
      .def_readwrite("max_size", &CorpusSpec::max_size)
      .def_readwrite("seed", &CorpusSpec::seed);

  m.def("generate_corpus", [](const CorpusSpec& spec, const std::string& out_dir) {
    const GeneratedCorpus corpus = generate_corpus(spec);
    write_corpus(corpus, out_dir);
    return corpus.samples.size();
  }, py::arg("spec"), py::arg("out_dir"));
  m.def("generate_samples", [](const CorpusSpec& spec) {
    const GeneratedCorpus corpus = generate_corpus(spec);
    py::list out;
    for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
      py::dict d;
      d["id"] = corpus.samples[i].id;
      d["label"] = corpus.samples[i].label;
      d["data"] = py::bytes(reinterpret_cast<const char*>(corpus.samples[i].bytes.data()),
                            corpus.samples[i].bytes.size());
      out.append(d);
    }
    return out;
  }, py::arg("spec"));
}
