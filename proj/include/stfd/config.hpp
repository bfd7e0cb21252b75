#pragma once

#include <string>
#include <string_view>
#include <utility>

#include "stfd/io.hpp"
#include "stfd/model.hpp"
#include "stfd/streaming.hpp"
#include "stfd/synth.hpp"
#include "stfd/training.hpp"

namespace stfd {

// Everything a run needs, read from a flat key=value file.
struct Config {
  ArchConfig arch;
  SynthConfig synth;
  CorpusConfig corpus;
  SegTrainConfig seg;
  StreamTrainConfig stream;
  ExtractConfig extract;
  std::string checkpoint = "model.ckpt";
  std::string log;  // empty: stdout only
};

// Starts from defaults; unknown keys and unparsable values throw ConfigError.
Config parse_config(std::string_view text);
Config load_config(const std::string& path);
void apply_keys(Config& cfg, const KeyValues& kv);
// Every key with its current value, in a fixed order.
KeyValues to_key_values(const Config& cfg);

// The synth.* and corpus.* subset, as stored in a corpus manifest.
KeyValues corpus_key_values(const SynthConfig& synth, const CorpusConfig& layout);
std::pair<SynthConfig, CorpusConfig> parse_corpus_key_values(const KeyValues& kv);

}  // namespace stfd
