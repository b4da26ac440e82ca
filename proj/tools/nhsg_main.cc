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

#include <filesystem>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "cli/commands.h"
#include "cli/config.h"
#include "nhsg/errors.h"

namespace {

using namespace nhsg::cli;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerics = 3;

int ExitCode(const nhsg::Error& e) {
  switch (e.category()) {
    case nhsg::Error::Category::kUsage: return kExitUsage;
    case nhsg::Error::Category::kData: return kExitData;
    case nhsg::Error::Category::kNumerics: return kExitNumerics;
  }
  return kExitData;
}

void AddTimbre(CLI::App* cmd, TimbreSource* t) {
  auto* audio = cmd->add_option("--timbre", t->audio, "timbre reference audio");
  auto* emb = cmd->add_option("--timbre-embedding", t->embedding, "timbre embedding file");
  audio->excludes(emb);
}

void AddTrain(CLI::App* cmd, TrainOptions* o) {
  cmd->add_option("--manifest", o->manifest, "training manifest")->required();
  cmd->add_option("--cache", o->cache_dir, "representation cache")->required();
  cmd->add_option("--out", o->out, "output checkpoint")->required();
  cmd->add_option("--work-dir", o->work_dir, "logs and rolling checkpoints (default <out>.work)");
  cmd->add_option("--resume", o->resume, "continue from a rolling checkpoint");
  cmd->add_option("--split", o->split, "manifest split to train on (train, dev, test, all)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Non-human singing voice synthesis and conversion toolkit"};
  app.require_subcommand(1);
  ConfigSources sources;
  std::optional<uint64_t> seed;
  app.add_option("--config", sources.path, "pipeline config (TOML)")->check(CLI::ExistingFile);
  app.add_option("--set", sources.overrides, "override a config key: section.key=value");
  app.add_option("--seed", seed, "run seed (overrides NHSG_SEED and the config)");

  SegmentOptions seg;
  auto* segment = app.add_subcommand("segment", "split recordings at silences");
  segment->add_option("--manifest", seg.manifest)->required();
  segment->add_option("--out-dir", seg.out_dir)->required();
  segment->add_option("--out-manifest", seg.out_manifest)->required();

  ExtractOptions ext;
  auto* extract = app.add_subcommand("extract", "content features, embeddings and representations");
  extract->add_option("--manifest", ext.manifest)->required();
  extract->add_option("--cache", ext.cache_dir)->required();
  extract->add_option("--codebook", ext.codebook, "also write token representations");
  extract->add_option("--split", ext.split);

  KMeansOptions km;
  auto* kmeans = app.add_subcommand("train-kmeans", "fit the token codebook");
  kmeans->add_option("--manifest", km.manifest)->required();
  kmeans->add_option("--cache", km.cache_dir)->required();
  kmeans->add_option("--out", km.out)->required();
  kmeans->add_option("--rows", km.rows, "annotated, human or all");

  TrainOptions s1;
  auto* stage1 = app.add_subcommand("train-stage1", "score to representation model");
  AddTrain(stage1, &s1);

  TrainOptions s2;
  auto* stage2 = app.add_subcommand("train-stage2", "vocoder pretraining");
  AddTrain(stage2, &s2);
  stage2->add_option("--domains", s2.domains, "human or all");

  TrainOptions ft;
  auto* finetune = app.add_subcommand("finetune", "vocoder finetuning with unpaired timbres");
  AddTrain(finetune, &ft);
  finetune->add_option("--init", ft.init, "pretrained vocoder checkpoint");

  SynthesizeOptions syn;
  auto* synthesize = app.add_subcommand("synthesize", "score + timbre to audio");
  synthesize->add_option("--score", syn.score)->required();
  synthesize->add_option("--stage1", syn.stage1)->required();
  synthesize->add_option("--ckpt", syn.vocoder)->required();
  synthesize->add_option("--out", syn.out)->required();
  AddTimbre(synthesize, &syn.timbre);

  ConvertOptions conv;
  auto* convert = app.add_subcommand("convert", "source audio + timbre to audio");
  convert->add_option("--source", conv.source)->required();
  convert->add_option("--ckpt", conv.vocoder)->required();
  convert->add_option("--codebook", conv.codebook);
  convert->add_option("--out", conv.out)->required();
  AddTimbre(convert, &conv.timbre);

  EvaluateOptions ev;
  auto* evaluate = app.add_subcommand("evaluate", "objective metrics over a pairs manifest");
  evaluate->add_option("--pairs", ev.pairs)->required();
  evaluate->add_option("--out-dir", ev.out_dir, "report directory (default: next to the pairs)");

  std::string inspect_path;
  auto* inspect = app.add_subcommand("inspect", "print an artifact as text");
  inspect->add_option("path", inspect_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (inspect->parsed()) {
      RunInspect(inspect_path, std::cout);
      return kExitOk;
    }
    sources.seed_flag = seed;
    const PipelineConfig cfg = LoadPipelineConfig(sources);
    if (segment->parsed()) RunSegment(cfg, seg);
    if (extract->parsed()) RunExtract(cfg, ext);
    if (kmeans->parsed()) RunTrainKMeans(cfg, km);
    if (stage1->parsed()) RunTrainStage1(cfg, s1);
    if (stage2->parsed()) RunTrainStage2(cfg, s2);
    if (finetune->parsed()) RunFinetune(cfg, ft);
    if (synthesize->parsed()) RunSynthesize(cfg, syn);
    if (convert->parsed()) RunConvert(cfg, conv);
    if (evaluate->parsed()) {
      if (ev.out_dir.empty()) {
        ev.out_dir = std::filesystem::path(ev.pairs).parent_path().string();
        if (ev.out_dir.empty()) ev.out_dir = ".";
      }
      return RunEvaluate(cfg, ev) == 0 ? kExitOk : kExitData;
    }
  } catch (const nhsg::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ExitCode(e);
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}
