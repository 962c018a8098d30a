// Writes the synthetic fixture corpora and configs under fixtures/.
//
//   make_fixtures <dir>
//
// Everything is derived from fixed seeds, so rerunning reproduces the
// committed files byte for byte.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "creole/rng.hpp"
#include "creole/synthetic.hpp"

namespace fs = std::filesystem;
using namespace creole;

namespace {

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  for (const auto& l : lines) out << l << '\n';
}

std::string capitalize(std::string w) {
  if (!w.empty() && w[0] >= 'a' && w[0] <= 'z') w[0] = static_cast<char>(w[0] - 'a' + 'A');
  return w;
}

// BIO sequences: creole words with person and place names dropped in.
void write_tagged(const fs::path& path, const std::vector<std::string>& sentences,
                  const std::vector<std::string>& people, const std::vector<std::string>& places,
                  std::uint64_t seed) {
  Rng rng(seed);
  std::ofstream out(path, std::ios::binary);
  for (const auto& s : sentences) {
    std::vector<std::string> words;
    std::string w;
    for (char c : s + " ") {
      if (c == ' ') {
        if (!w.empty()) words.push_back(w);
        w.clear();
      } else {
        w.push_back(c);
      }
    }
    std::vector<std::pair<std::string, std::string>> rows;
    for (const auto& word : words) {
      const double u = uniform01(rng);
      if (u < 0.08) {
        rows.emplace_back(capitalize(people[uniform_index(rng, people.size())]), "B-PER");
        if (uniform01(rng) < 0.5) rows.emplace_back(capitalize(people[uniform_index(rng, people.size())]), "I-PER");
      } else if (u < 0.13) {
        rows.emplace_back(capitalize(places[uniform_index(rng, places.size())]), "B-LOC");
      }
      rows.emplace_back(word, "O");
    }
    for (const auto& [tok, tag] : rows) out << tok << '\t' << tag << '\n';
    out << '\n';
  }
}

const char* kExperiment = R"(# Fixture experiment: a synthetic creole mixed with three other languages.
seed = 13
output = ../runs/fixture

[data]
creole = creole.txt
creole_language = creole:tok
aux.en = en.txt
aux.pt = pt.txt
aux.yo = yo.txt
mode = mixed
scarce_fraction = 0.95
dev_ratio = 0.05
vocab_size = 1000
min_count = 1

[grouping]
strategy = language

[train]
objective = dro
preset = tiny
steps = 500
batch_size = 16
lr = 0.001
weight_decay = 0.01
eta_q = 0.01

[eval]
ks = 1,5,10
dictionary = dictionary.txt

[tagging]
train = ner_train.tsv
dev = ner_dev.tsv
test = ner_test.tsv
scheme = bio
epochs = 10

[divergence]
pair.tok-bible-news = tok, bible, tok_bible.txt, news, tok_news.txt
pair.en-bible-news = en, bible, en_bible.txt, news, en_news.txt
)";

const char* kCreoleOnly = R"(# Creole-only data grouped by identified language collections.
seed = 13
output = ../runs/creole-only

[data]
creole = creole.txt
creole_language = creole:tok
mode = creole-only
dev_ratio = 0.05

[grouping]
strategy = language
threshold = 0.001
langid.en = en.txt
langid.pt = pt.txt
langid.yo = yo.txt

[train]
objective = dro
preset = tiny
steps = 300
lr = 0.001

[eval]
dictionary = dictionary.txt
)";

const char* kSweep = R"(# Short runs for sweep smoke tests.
seed = 5
output = ../runs/sweep

[data]
creole = creole.txt
creole_language = creole:tok
aux.en = en.txt
aux.pt = pt.txt
aux.yo = yo.txt
target_per_language = 150

[train]
objective = erm
preset = tiny
steps = 12
batch_size = 8
lr = 0.001

[eval]
dictionary = dictionary.txt
)";

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_fixtures <dir>\n";
    return 1;
  }
  const fs::path dir = argv[1];
  fs::create_directories(dir);

  const auto en = synthetic::make_language("en", "abcdefghiklmnoprstuwy", 220, 11);
  const auto pt = synthetic::make_language("pt", "abcdeghilmnoqrstuvzãçéõ", 220, 12);
  const auto yo = synthetic::make_language("yo", "abdefgijklmnoprstuwyẹọṣ", 220, 13);
  const auto local = synthetic::make_language("local", "abdehiklmnoprstuw", 80, 14);

  const auto creole = synthetic::mixed_sentences({en, yo, local}, {0.6, 0.2, 0.2}, 400, 4, 12, 21);
  write_lines(dir / "creole.txt", creole);
  write_lines(dir / "en.txt", synthetic::sentences(en, 400, 4, 12, 22));
  write_lines(dir / "pt.txt", synthetic::sentences(pt, 400, 4, 12, 23));
  write_lines(dir / "yo.txt", synthetic::sentences(yo, 120, 4, 12, 24));

  std::vector<std::string> dict(local.lexicon.begin(), local.lexicon.begin() + 40);
  write_lines(dir / "dictionary.txt", dict);

  const auto people = synthetic::make_language("per", "aeiklmnorstu", 30, 31).lexicon;
  const auto places = synthetic::make_language("loc", "abdeilnorsuz", 20, 32).lexicon;
  write_tagged(dir / "ner_train.tsv", synthetic::mixed_sentences({en, yo, local}, {0.6, 0.2, 0.2}, 160, 4, 12, 41),
               people, places, 51);
  write_tagged(dir / "ner_dev.tsv", synthetic::mixed_sentences({en, yo, local}, {0.6, 0.2, 0.2}, 40, 4, 12, 42),
               people, places, 52);
  write_tagged(dir / "ner_test.tsv", synthetic::mixed_sentences({en, yo, local}, {0.6, 0.2, 0.2}, 40, 4, 12, 43),
               people, places, 53);

  // Two registers per language: different mixes of the same lexicons.
  write_lines(dir / "tok_bible.txt", synthetic::mixed_sentences({en, local}, {0.3, 0.7}, 120, 6, 14, 61));
  write_lines(dir / "tok_news.txt", synthetic::mixed_sentences({en, yo}, {0.8, 0.2}, 120, 4, 10, 62));
  write_lines(dir / "en_bible.txt", synthetic::sentences(en, 120, 6, 14, 63));
  write_lines(dir / "en_news.txt", synthetic::mixed_sentences({en, pt}, {0.7, 0.3}, 120, 4, 10, 64));

  std::ofstream(dir / "experiment.cfg", std::ios::binary) << kExperiment;
  std::ofstream(dir / "creole_only.cfg", std::ios::binary) << kCreoleOnly;
  std::ofstream(dir / "sweep.cfg", std::ios::binary) << kSweep;
  std::cout << "fixtures written to " << dir << '\n';
  return 0;
}
