// Copyright 2026 The NHSG Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cli/commands.h"

#include <filesystem>
#include <fstream>
#include <iostream>

#include "cli/manifest.h"
#include "nhsg/binary_io.h"
#include "nhsg/errors.h"
#include "nhsg/numerics/parameters.h"

namespace nhsg::cli {
namespace {

namespace fs = std::filesystem;

std::string WorkDir(const TrainOptions& o) {
  return o.work_dir.empty() ? o.out + ".work" : o.work_dir;
}

void Require(const std::string& value, const std::string& flag) {
  if (value.empty()) throw ConfigError("missing required " + flag);
}

void RequireFile(const std::string& path) {
  if (!fs::exists(path)) throw IoError("missing input " + path);
}

void EnsureParent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

// Copies a bundle (binary file plus its ".json" sidecar).
void CopyCheckpoint(const std::string& from, const std::string& to) {
  EnsureParent(to);
  fs::copy_file(from, to, fs::copy_options::overwrite_existing);
  if (fs::exists(from + ".json")) {
    fs::copy_file(from + ".json", to + ".json", fs::copy_options::overwrite_existing);
  }
}

std::vector<stage2::VocoderExample> LoadVocoderExamples(const std::vector<ManifestRow>& rows,
                                                        const std::string& cache,
                                                        int sample_rate) {
  std::vector<stage2::VocoderExample> out;
  for (const auto& r : rows) {
    const std::string zpath = CachePath(cache, r.id, "nhrz");
    if (!fs::exists(zpath)) {
      std::cerr << "skipping " << r.id << ": no representation in the cache\n";
      continue;
    }
    stage2::VocoderExample ex;
    ex.id = r.id;
    ex.z = representation::ReadRepresentation(zpath);
    ex.audio = LoadAudio(r.audio_path, sample_rate);
    ex.embedding = representation::ReadEmbedding(CachePath(cache, r.id, "nhte")).values;
    ex.human = r.human();
    out.push_back(std::move(ex));
  }
  return out;
}

void SetTokenLayout(const representation::ContentTokens& t, std::vector<int>* layer_ids,
                    std::vector<int>* vocab) {
  *layer_ids = t.layer_ids;
  *vocab = t.vocab;
}

std::vector<float> ResolveTimbre(const PipelineConfig& cfg, const TimbreSource& t) {
  if (!t.embedding.empty()) {
    auto e = representation::ReadEmbedding(t.embedding, cfg.embedder.dim);
    representation::ValidateEmbedding(e, cfg.embedder.dim);
    return e.values;
  }
  Require(t.audio, "--timbre or --timbre-embedding");
  representation::TimbreEmbedder embedder(cfg.embedder);
  const auto w = LoadAudio(t.audio, cfg.sample_rate);
  return embedder.Embed(w, fs::path(t.audio).stem().string()).values;
}

void WriteOutput(const dsp::Waveform& w, const std::string& path) {
  EnsureParent(path);
  dsp::WriteWav(w, path);
}

}  // namespace

std::string CachePath(const std::string& cache_dir, const std::string& id,
                      const std::string& ext) {
  return (fs::path(cache_dir) / (id + "." + ext)).string();
}

dsp::Waveform LoadAudio(const std::string& path, int sample_rate) {
  dsp::Waveform w = dsp::ReadWav(path);
  if (w.sample_rate == sample_rate) return w;
  if (w.sample_rate > sample_rate && w.sample_rate % sample_rate == 0) {
    return dsp::DecimateByAveraging(w, w.sample_rate / sample_rate);
  }
  throw DataError(path + ": sample rate " + std::to_string(w.sample_rate) +
                  " cannot be brought to " + std::to_string(sample_rate));
}

void RunSegment(const PipelineConfig& cfg, const SegmentOptions& o) {
  Require(o.manifest, "--manifest");
  Require(o.out_dir, "--out-dir");
  Require(o.out_manifest, "--out-manifest");
  const auto rows = ReadManifest(o.manifest);
  fs::create_directories(o.out_dir);
  std::vector<ManifestRow> out;
  for (const auto& r : rows) {
    if (r.annotated) {
      out.push_back(r);
      continue;
    }
    const auto w = LoadAudio(r.audio_path, cfg.sample_rate);
    auto segs = segmentation::SegmentRecording(w, cfg.segmentation, r.id);
    const size_t found = segs.size();
    if (cfg.filter_unvoiced) segs = segmentation::FilterByF0(segs, cfg.pitch);
    std::cerr << r.id << ": " << found << " segments, " << segs.size() << " kept\n";
    for (const auto& s : segs) {
      ManifestRow row = r;
      const fs::path file = fs::absolute(fs::path(o.out_dir) / s.FileName());
      row.id = file.stem().string();
      row.audio_path = file.string();
      dsp::WriteWav(s.waveform, row.audio_path);
      out.push_back(std::move(row));
    }
  }
  EnsureParent(o.out_manifest);
  WriteManifest(out, o.out_manifest);
}

void RunExtract(const PipelineConfig& cfg, const ExtractOptions& o) {
  Require(o.manifest, "--manifest");
  Require(o.cache_dir, "--cache");
  const auto rows = FilterSplit(ReadManifest(o.manifest), o.split);
  fs::create_directories(o.cache_dir);
  const representation::ContentExtractor extractor(cfg.extractor);
  const representation::TimbreEmbedder embedder(cfg.embedder);
  std::optional<representation::Codebook> cb;
  if (!o.codebook.empty()) cb = representation::ReadCodebook(o.codebook);
  for (const auto& r : rows) {
    const auto w = LoadAudio(r.audio_path, cfg.sample_rate);
    representation::WriteFeatures(extractor.Extract(w, r.id),
                                  CachePath(o.cache_dir, r.id, "nhft"));
    representation::TimbreEmbedding e;
    if (!r.embedding_path.empty()) {
      e = representation::ReadEmbedding(r.embedding_path, cfg.embedder.dim);
      representation::ValidateEmbedding(e, cfg.embedder.dim);
    } else {
      e = embedder.Embed(w, r.id);
    }
    representation::WriteEmbedding(e, CachePath(o.cache_dir, r.id, "nhte"));
    if (cb) {
      try {
        representation::WriteRepresentation(
            representation::BuildRepresentation(w, extractor, *cb, cfg.pitch, r.id),
            CachePath(o.cache_dir, r.id, "nhrz"));
      } catch (const InvalidSegmentError& err) {
        std::cerr << "skipping " << r.id << ": " << err.what() << '\n';
      }
    }
  }
}

void RunTrainKMeans(const PipelineConfig& cfg, const KMeansOptions& o) {
  Require(o.manifest, "--manifest");
  Require(o.cache_dir, "--cache");
  Require(o.out, "--out");
  if (o.rows != "annotated" && o.rows != "human" && o.rows != "all") {
    throw ConfigError("--rows must be annotated, human or all");
  }
  std::vector<representation::ContentFeatures> feats;
  for (const auto& r : ReadManifest(o.manifest)) {
    if (r.split != "train") continue;
    if (o.rows != "all" && !r.human()) continue;
    if (o.rows == "annotated" && !r.annotated) continue;
    feats.push_back(representation::ReadFeatures(CachePath(o.cache_dir, r.id, "nhft")));
  }
  if (feats.empty()) throw DataError("no training rows match --rows " + o.rows);
  const auto cb = representation::FitKMeans(feats, cfg.kmeans);
  for (size_t l = 0; l < cb.layer_ids.size(); ++l) {
    std::cerr << "layer " << cb.layer_ids[l] << ": k=" << cb.vocab_size(l) << " iterations "
              << cb.iterations[l] << " inertia " << cb.inertia[l] << '\n';
  }
  EnsureParent(o.out);
  representation::WriteCodebook(cb, o.out);
}

void RunTrainStage1(const PipelineConfig& cfg, const TrainOptions& o) {
  Require(o.manifest, "--manifest");
  Require(o.cache_dir, "--cache");
  Require(o.out, "--out");
  std::vector<stage1::Stage1Example> data;
  std::vector<stage1::Score> scores;
  for (const auto& r : FilterSplit(ReadManifest(o.manifest), o.split)) {
    if (!r.annotated) continue;
    stage1::Stage1Example ex;
    ex.id = r.id;
    ex.score = stage1::ReadScore(r.score_path);
    ex.z = representation::ReadRepresentation(CachePath(o.cache_dir, r.id, "nhrz"));
    scores.push_back(ex.score);
    data.push_back(std::move(ex));
  }
  if (data.empty()) throw DataError("no annotated rows for stage 1");

  stage1::Stage1TrainConfig train = cfg.stage1_train;
  train.checkpoint_dir = WorkDir(o);
  ParameterStore opt_state;
  std::optional<stage1::Stage1Model> model;
  if (!o.resume.empty()) {
    RequireFile(o.resume);
    model.emplace(stage1::LoadStage1(o.resume, &opt_state));
  } else {
    stage1::Stage1Config s1 = cfg.stage1;
    s1.phonemes = stage1::PhonemeVocab::FromScores(scores).symbols();
    SetTokenLayout(data[0].z.tokens, &s1.layer_ids, &s1.token_vocab);
    model.emplace(s1);
  }
  for (const auto& ex : data) stage1::CheckExample(ex, model->config());
  stage1::TrainStage1(*model, data, train, o.resume.empty() ? nullptr : &opt_state);
  EnsureParent(o.out);
  stage1::SaveStage1(*model, o.out);
}

void RunTrainStage2(const PipelineConfig& cfg, const TrainOptions& o) {
  Require(o.manifest, "--manifest");
  Require(o.cache_dir, "--cache");
  Require(o.out, "--out");
  if (o.domains != "human" && o.domains != "all") throw ConfigError("--domains must be human or all");
  std::vector<ManifestRow> rows;
  for (const auto& r : FilterSplit(ReadManifest(o.manifest), o.split)) {
    if (o.domains == "all" || r.human()) rows.push_back(r);
  }
  const auto data = LoadVocoderExamples(rows, o.cache_dir, cfg.sample_rate);
  if (data.empty()) throw DataError("no vocoder training rows");

  stage2::Stage2TrainConfig train = cfg.stage2_train;
  train.checkpoint_dir = WorkDir(o);
  if (!o.resume.empty()) {
    RequireFile(o.resume);
    auto ck = stage2::LoadStage2(o.resume);
    stage2::TrainStage2(ck.gen, ck.disc, data, train, &ck.opt);
  } else {
    stage2::GeneratorConfig gc = cfg.generator;
    SetTokenLayout(data[0].z.tokens, &gc.layer_ids, &gc.token_vocab);
    stage2::Generator gen(gc);
    stage2::Discriminator disc(cfg.discriminator);
    stage2::TrainStage2(gen, disc, data, train);
  }
  const std::string last = train.checkpoint_dir + "/stage2_last.ckpt";
  if (!fs::exists(last)) throw DataError("nothing trained: step counter already at " +
                                         std::to_string(train.steps));
  CopyCheckpoint(last, o.out);
}

void RunFinetune(const PipelineConfig& cfg, const TrainOptions& o) {
  Require(o.manifest, "--manifest");
  Require(o.cache_dir, "--cache");
  Require(o.out, "--out");
  if (o.init.empty() == o.resume.empty()) throw ConfigError("give exactly one of --init, --resume");
  std::vector<ManifestRow> human_rows, other_rows;
  for (const auto& r : FilterSplit(ReadManifest(o.manifest), o.split)) {
    (r.human() ? human_rows : other_rows).push_back(r);
  }
  const auto human = LoadVocoderExamples(human_rows, o.cache_dir, cfg.sample_rate);
  const auto nonhuman = LoadVocoderExamples(other_rows, o.cache_dir, cfg.sample_rate);

  finetune::FinetuneConfig fc = cfg.finetune;
  fc.train.checkpoint_dir = WorkDir(o);
  if (!o.resume.empty()) {
    RequireFile(o.resume);
    auto ck = stage2::LoadStage2(o.resume);
    if (ck.extra_json.empty()) throw FormatError(o.resume + ": not a finetune checkpoint");
    finetune::Predictor predictor(finetune::PredictorConfigFromJson(ck.extra_json));
    predictor.params().AssignFrom(ck.extra);
    predictor.params().step = ck.extra.step;
    finetune::FinetuneState state{ck.opt, ck.extra_opt};
    finetune::Finetune(ck.gen, ck.disc, predictor, human, nonhuman, fc, &state);
  } else {
    RequireFile(o.init);
    auto ck = stage2::LoadStage2(o.init);
    // fresh schedule and moments for the new phase
    ck.gen.params().step = 0;
    ck.disc.params().step = 0;
    finetune::PredictorConfig pc = cfg.predictor;
    pc.layer_ids = ck.gen.config().layer_ids;
    pc.token_vocab = ck.gen.config().token_vocab;
    pc.timbre_dim = ck.gen.config().timbre_dim;
    finetune::Predictor predictor(pc);
    finetune::Finetune(ck.gen, ck.disc, predictor, human, nonhuman, fc);
  }
  const std::string last = fc.train.checkpoint_dir + "/finetune_last.ckpt";
  if (!fs::exists(last)) throw DataError("nothing trained: step counter already at " +
                                         std::to_string(fc.train.steps));
  CopyCheckpoint(last, o.out);
}

void RunSynthesize(const PipelineConfig& cfg, const SynthesizeOptions& o) {
  Require(o.score, "--score");
  Require(o.stage1, "--stage1");
  Require(o.vocoder, "--ckpt");
  Require(o.out, "--out");
  RequireFile(o.stage1);
  RequireFile(o.vocoder);
  const auto e = ResolveTimbre(cfg, o.timbre);
  const auto model = stage1::LoadStage1(o.stage1);
  const auto score = stage1::ReadScore(o.score);
  const auto ck = stage2::LoadStage2(o.vocoder);
  const int hop = ck.gen.config().hop();
  const auto z = stage1::InferStage1(model, score, hop, ck.gen.config().sample_rate);
  WriteOutput(stage2::Vocode(ck.gen, z, e), o.out);
}

void RunConvert(const PipelineConfig& cfg, const ConvertOptions& o) {
  Require(o.source, "--source");
  Require(o.vocoder, "--ckpt");
  Require(o.out, "--out");
  const std::string cb_path = o.codebook.empty() ? cfg.codebook : o.codebook;
  Require(cb_path, "--codebook (or representation.codebook)");
  RequireFile(o.vocoder);
  const auto e = ResolveTimbre(cfg, o.timbre);
  const auto cb = representation::ReadCodebook(cb_path);
  const representation::ContentExtractor extractor(cfg.extractor);
  const auto w = LoadAudio(o.source, cfg.sample_rate);
  const auto z = representation::BuildRepresentation(w, extractor, cb, cfg.pitch,
                                                     fs::path(o.source).stem().string());
  const auto ck = stage2::LoadStage2(o.vocoder);
  WriteOutput(stage2::Vocode(ck.gen, z, e), o.out);
}

int RunEvaluate(const PipelineConfig& cfg, const EvaluateOptions& o) {
  Require(o.pairs, "--pairs");
  Require(o.out_dir, "--out-dir");
  const auto rows = eval::ReadPairsManifest(o.pairs, cfg.metrics);
  const representation::TimbreEmbedder embedder(cfg.embedder);
  eval::EvalContext ctx;
  ctx.embedder = &embedder;
  ctx.pitch = cfg.pitch;
  ctx.mcd = cfg.mcd;
  const auto report = eval::EvaluateManifest(rows, ctx);
  fs::create_directories(o.out_dir);
  eval::WriteReportCsv(report, (fs::path(o.out_dir) / "report.csv").string());
  eval::WriteReportJson(report, (fs::path(o.out_dir) / "report.json").string());
  std::cout << "rows " << report.rows.size() << " failed " << report.failed << '\n'
            << "lf0_rmse " << report.lf0_rmse.mean << " (n=" << report.lf0_rmse.count << ")\n"
            << "vuv_pct " << report.vuv_pct.mean << " (n=" << report.vuv_pct.count << ")\n"
            << "sim " << report.sim.mean << " (n=" << report.sim.count << ")\n"
            << "mcd " << report.mcd.mean << " (n=" << report.mcd.count << ")\n"
            << "f0_nan_pct " << report.f0_nan_pct() << '\n';
  for (const auto& r : report.rows) {
    if (r.failed) std::cerr << r.id << ": " << r.error << '\n';
  }
  return report.failed;
}

void RunInspect(const std::string& path, std::ostream& out) {
  std::string magic(4, '\0');
  {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    in.read(magic.data(), 4);
    if (!in) throw FormatError(path + ": too short for an artifact header");
  }
  if (magic == "NHRZ") {
    const auto z = representation::ReadRepresentation(path);
    const auto& t = z.tokens;
    out << "representation " << path << "\nframes " << t.num_frames() << " frame_period_ms "
        << z.f0.frame_spec.frame_period_ms() << "\nlayers";
    for (size_t l = 0; l < t.layer_ids.size(); ++l) {
      out << ' ' << t.layer_ids[l] << "(K=" << t.vocab[l] << ')';
    }
    out << "\nframe\tf0_hz\tvoiced";
    for (int id : t.layer_ids) out << "\tL" << id;
    out << '\n';
    for (int f = 0; f < t.num_frames(); ++f) {
      out << f << '\t' << z.f0.f0_hz[f] << '\t' << (z.f0.voiced[f] ? 1 : 0);
      for (const auto& layer : t.tokens) out << '\t' << layer[f];
      out << '\n';
    }
  } else if (magic == "NHFT") {
    const auto f = representation::ReadFeatures(path);
    out << "features " << path << "\nframes " << f.num_frames() << '\n';
    for (size_t l = 0; l < f.layers.size(); ++l) {
      out << "layer " << f.layer_ids[l] << " dim " << f.layers[l].cols() << " mean "
          << f.layers[l].mean() << '\n';
    }
  } else if (magic == "NHTE") {
    const auto e = representation::ReadEmbedding(path);
    out << "embedding " << path << " source '" << e.source_id << "' dim " << e.values.size()
        << '\n';
    for (size_t i = 0; i < e.values.size(); ++i) {
      out << e.values[i] << ((i + 1) % 8 == 0 ? '\n' : ' ');
    }
    out << '\n';
  } else if (magic == "NHCB") {
    const auto cb = representation::ReadCodebook(path);
    out << "codebook " << path << " seed " << cb.seed << '\n';
    for (size_t l = 0; l < cb.layer_ids.size(); ++l) {
      out << "layer " << cb.layer_ids[l] << " k " << cb.vocab_size(l) << " dim "
          << cb.centroids[l].cols() << " iterations " << cb.iterations[l] << " inertia "
          << cb.inertia[l] << '\n';
    }
  } else if (magic == "NHCK") {
    const auto store = LoadParams(path);
    out << "parameters " << path << " step " << store.step << " scalars " << store.NumScalars()
        << '\n';
    for (const auto& [name, t] : store.entries()) {
      out << name << " [";
      for (size_t i = 0; i < t.shape().size(); ++i) out << (i ? "," : "") << t.shape()[i];
      out << "]\n";
    }
  } else {
    throw FormatError(path + ": unknown artifact type");
  }
}

}  // namespace nhsg::cli
