#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "creole/eval.hpp"
#include "creole/synthetic.hpp"
#include "creole/text.hpp"
#include "test_util.hpp"

using namespace creole;
using testutil::FunctionModel;

namespace {

Vocab letters_vocab(std::size_t n) {
  std::vector<std::string> tokens = {"[PAD]", "[UNK]", "[MASK]"};
  for (std::size_t i = 0; i < n; ++i) tokens.push_back("w" + std::to_string(i));
  return Vocab(tokens);
}

Corpus corpus_of(const std::vector<std::string>& lines) { return synthetic::make_corpus("t", "creole:t", lines); }

Corpus random_corpus(const Vocab& v, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::string> lines;
  for (std::size_t i = 0; i < n; ++i) {
    std::string s;
    const std::size_t len = 2 + uniform_index(rng, 8);
    for (std::size_t j = 0; j < len; ++j) s += (j ? " " : "") + v.token(static_cast<int>(3 + uniform_index(rng, v.size() - 3)));
    lines.push_back(s);
  }
  return corpus_of(lines);
}

// Deterministic pseudo-random log scores from the query contents, no ties.
FunctionModel hashed_model(std::size_t vocab) {
  return FunctionModel(vocab, [vocab](const MaskedQuery& q) {
    std::uint64_t h = q.position * 1315423911u;
    for (int id : q.ids) h = mix_seed(h, static_cast<std::uint64_t>(id));
    Rng rng(h);
    std::vector<double> s(vocab);
    for (auto& x : s) x = uniform01(rng) * 10.0 - 20.0;
    return s;
  });
}

std::vector<std::vector<std::string>> split_labels(const std::vector<std::string>& seqs) {
  std::vector<std::vector<std::string>> out;
  for (const auto& s : seqs) out.push_back(text::split_whitespace(s));
  return out;
}

// Independent span reader: walks the sequence tracking the open type only.
std::set<std::tuple<std::size_t, std::size_t, std::size_t, std::string>> oracle_spans(
    std::size_t seq, const std::vector<std::string>& labels) {
  std::set<std::tuple<std::size_t, std::size_t, std::size_t, std::string>> out;
  std::string open_type;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= labels.size(); ++i) {
    const std::string l = i < labels.size() ? labels[i] : "O";
    const char prefix = l[0];
    const std::string type = l.size() > 2 ? l.substr(2) : "";
    const bool continues = prefix == 'I' && !open_type.empty() && type == open_type;
    if (!continues && !open_type.empty()) {
      out.insert({seq, start, i - 1, open_type});
      open_type.clear();
    }
    if ((prefix == 'B' || prefix == 'I') && !continues) {
      open_type = type;
      start = i;
    }
  }
  return out;
}

TaggedCorpus tagged(const std::vector<std::pair<std::string, std::string>>& rows, TagScheme scheme) {
  // rows: (space-separated tokens, space-separated labels)
  TaggedCorpus t;
  t.scheme = scheme;
  for (const auto& [toks, labs] : rows) {
    TaggedSequence s{text::split_whitespace(toks), text::split_whitespace(labs)};
    for (const auto& l : s.labels) t.tagset.insert(l);
    t.sequences.push_back(std::move(s));
  }
  return t;
}

}  // namespace

TEST(GoldRank, CountsStrictlyGreaterAndBreaksTiesUniformly) {
  Rng rng(1);
  EXPECT_EQ(gold_rank({0.1, 0.5, 0.3}, 2, rng), 1u);
  EXPECT_EQ(gold_rank({0.9, 0.5, 0.3}, 0, rng), 0u);
  std::map<std::size_t, int> seen;
  for (int i = 0; i < 4000; ++i) ++seen[gold_rank({1.0, 1.0, 1.0, 1.0}, 2, rng)];
  ASSERT_EQ(seen.size(), 4u);
  for (const auto& [rank, n] : seen) EXPECT_NEAR(n / 4000.0, 0.25, 0.03);
  EXPECT_THROW(gold_rank({1.0}, 3, rng), std::invalid_argument);
}

TEST(Precision, OracleModelScoresPerfectly) {
  const Vocab v = letters_vocab(30);
  // Builds the answer key by masking every position of every sentence; a
  // sentence whose masked query collides with another's is left out.
  std::map<std::pair<std::vector<int>, std::size_t>, int> key;
  std::vector<std::string> kept;
  const Corpus pool = random_corpus(v, 60, 3);
  for (const auto& s : pool.sentences()) {
    const auto ids = tokenize(v, s.text, 64);
    bool clash = false;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      auto m = ids;
      m[i] = Vocab::kMask;
      const auto it = key.find({m, i});
      clash |= it != key.end() && it->second != ids[i];
    }
    if (clash) continue;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      auto m = ids;
      m[i] = Vocab::kMask;
      key[{m, i}] = ids[i];
    }
    kept.push_back(s.text);
  }
  ASSERT_GE(kept.size(), 50u);
  const Corpus c = corpus_of(kept);
  FunctionModel oracle(v.size(), [&](const MaskedQuery& q) {
    std::vector<double> s(v.size(), -50.0);
    s[static_cast<std::size_t>(key.at({q.ids, q.position}))] = 0.0;
    return s;
  });
  const auto r = precision_at_k(oracle, v, c, {1, 5}, 9);
  EXPECT_EQ(r.evaluated, kept.size());
  EXPECT_DOUBLE_EQ(r.precision.at(1), 1.0);
  EXPECT_NEAR(mean_pll(oracle, v, c).pll, 0.0, 1e-12);
}

TEST(Precision, HandSetThreeSentences) {
  // One in-vocabulary token per sentence, so the masked position is forced.
  const Vocab v = letters_vocab(5);
  const Corpus c = corpus_of({"zz w0 yy", "w1 qq", "xx ww w2"});
  FunctionModel m(v.size(), [](const MaskedQuery& q) {
    std::vector<double> s = {-9, -9, -9, -1, -2, -3, -4, -5};
    if (q.ids.size() == 2) s[4] = -0.5;  // second sentence: gold w1 on top
    if (q.ids.size() == 3 && q.position == 1) s[3] = -0.1;  // first: gold w0 on top
    return s;
  });
  const auto r = precision_at_k(m, v, c, {1, 5}, 0);
  EXPECT_EQ(r.evaluated, 3u);
  EXPECT_NEAR(r.precision.at(1), 2.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(r.precision.at(5), 1.0);
  const Corpus none = corpus_of({"aa bb", "w3 cc"});
  const auto r2 = precision_at_k(m, v, none, {1}, 0);
  EXPECT_EQ(r2.evaluated, 1u);
  EXPECT_EQ(r2.skipped, 1u);
}

TEST(Precision, MonotoneInK) {
  const Vocab v = letters_vocab(40);
  const Corpus c = random_corpus(v, 200, 4);
  const auto r = precision_at_k(hashed_model(v.size()), v, c, {1, 2, 5, 10, 43}, 3);
  double prev = 0;
  for (const auto& [k, p] : r.precision) {
    EXPECT_GE(p, prev);
    prev = p;
  }
  EXPECT_DOUBLE_EQ(r.precision.at(43), 1.0);
}

TEST(Precision, IndependentOfCorpusOrder) {
  const Vocab v = letters_vocab(40);
  const Corpus c = random_corpus(v, 120, 5);
  std::vector<Sentence> rev(c.sentences().rbegin(), c.sentences().rend());
  const Corpus reversed("rev", c.language_inventory(), rev);
  const auto m = hashed_model(v.size());
  const auto a = precision_at_k(m, v, c, {1, 5}, 11);
  const auto b = precision_at_k(m, v, reversed, {1, 5}, 11);
  EXPECT_EQ(a.precision, b.precision);
  EXPECT_NEAR(mean_pll(m, v, c).pll, mean_pll(m, v, reversed).pll, 1e-12);
}

TEST(Precision, UniformModelHitsAtChance) {
  const Vocab v = letters_vocab(17);  // 20 ids
  const Corpus c = random_corpus(v, 3000, 6);
  const auto r = precision_at_k(testutil::uniform_model(v.size()), v, c, {1, 5}, 2);
  // 5 sigma bands around 1/20 and 5/20.
  EXPECT_NEAR(r.precision.at(1), 0.05, 5 * std::sqrt(0.05 * 0.95 / 3000));
  EXPECT_NEAR(r.precision.at(5), 0.25, 5 * std::sqrt(0.25 * 0.75 / 3000));
}

TEST(Pll, UniformModelIsLogVocab) {
  const Vocab v = letters_vocab(97);
  const auto r = mean_pll(testutil::uniform_model(100), v, random_corpus(v, 40, 7));
  EXPECT_NEAR(r.pll, std::log(100.0), 1e-9);
  EXPECT_NEAR(r.pll, 4.60517, 1e-5);
  EXPECT_EQ(r.sentences, 40u);
}

TEST(Pll, HandSetSentenceMeans) {
  const Vocab v = letters_vocab(3);
  // Gold log-probabilities -1, -2 and -3 for the three one-token sentences.
  FunctionModel m(v.size(), [](const MaskedQuery&) { return std::vector<double>{-9, -9, -9, -1, -2, -3}; });
  EXPECT_NEAR(mean_pll(m, v, corpus_of({"w0", "w1", "w2"})).pll, 2.0, 1e-12);
  EXPECT_NEAR(mean_pll(m, v, corpus_of({"w0 w2", "w1"})).pll, 2.0, 1e-12);
  // Sentence means first: (7/3 + 2) / 2, where the token mean would give 9/4.
  EXPECT_NEAR(mean_pll(m, v, corpus_of({"w0 w2 w2", "w1"})).pll, (7.0 / 3 + 2.0) / 2, 1e-12);
  // Out-of-vocabulary tokens are scored as UNK.
  EXPECT_NEAR(mean_pll(m, v, corpus_of({"zzz"})).pll, 9.0, 1e-12);
}

TEST(Pll, DuplicatingTheCorpusChangesNothing) {
  const Vocab v = letters_vocab(30);
  const Corpus c = random_corpus(v, 60, 8);
  std::vector<std::string> twice;
  for (int rep = 0; rep < 2; ++rep)
    for (const auto& s : c.sentences()) twice.push_back(s.text);
  const auto m = hashed_model(v.size());
  EXPECT_NEAR(mean_pll(m, v, c).pll, mean_pll(m, v, corpus_of(twice)).pll, 1e-12);
}

TEST(DictPrecision, FullDictionaryMatchesPlainPrecision) {
  const Vocab v = letters_vocab(40);
  const Corpus c = random_corpus(v, 150, 9);
  DictionarySet all;
  for (int id = Vocab::kReserved; id < static_cast<int>(v.size()); ++id) all.words.insert(v.token(id));
  const auto m = hashed_model(v.size());
  const auto a = precision_at_k(m, v, c, {1, 5}, 4);
  const auto b = dict_precision_at_k(m, v, c, all, {1, 5}, 4);
  EXPECT_EQ(a.precision, b.precision);
  EXPECT_EQ(a.evaluated, b.evaluated);
}

TEST(DictPrecision, DisjointDictionarySkipsEverything) {
  const Vocab v = letters_vocab(10);
  const Corpus c = random_corpus(v, 20, 10);
  DictionarySet other{"d", {"nothing", "here"}};
  const auto r = dict_precision_at_k(testutil::uniform_model(v.size()), v, c, other, {1}, 0);
  EXPECT_EQ(r.evaluated, 0u);
  EXPECT_EQ(r.skipped, 20u);
}

TEST(DictPrecision, OnlyDictionaryPositionsAreMasked) {
  const Vocab v({"[PAD]", "[UNK]", "[MASK]", "treat", "him", "makah", "lah"});
  const Corpus c = corpus_of({"treat him makah lah", "lah makah", "him lah treat", "Lah"});
  DictionarySet dict{"d", {"lah"}};
  std::vector<std::size_t> positions;
  FunctionModel m(v.size(), [&](const MaskedQuery& q) {
    positions.push_back(q.position);
    return std::vector<double>(7, -1.0);
  });
  const auto r = dict_precision_at_k(m, v, c, dict, {1}, 3);
  EXPECT_EQ(r.evaluated, 4u);
  EXPECT_EQ(positions, (std::vector<std::size_t>{3, 0, 1, 0}));
}

TEST(Report, TsvAndTextLayout) {
  EvalReport r;
  r.model_id = "dro-language";
  r.dataset_id = "dev";
  r.seed = 13;
  r.p_at_k = {{1, 0.25}, {5, 0.5}};
  r.pd_at_k = {{1, 0.125}};
  r.pll = 4.5;
  r.evaluated = 8;
  r.dict_evaluated = 4;
  r.skipped_dict_sentences = 2;
  std::ostringstream tsv, txt;
  write_report_tsv(tsv, {r});
  write_report_text(txt, {r});
  EXPECT_EQ(tsv.str(),
            "model\tdataset\tseed\tP@1\tP@5\tP_D@1\tP_D@5\tPLL\tevaluated\tdict_evaluated\tskipped_dict\n"
            "dro-language\tdev\t13\t0.250000\t0.500000\t0.125000\tNA\t4.500000\t8\t4\t2\n");
  EXPECT_NE(txt.str().find("25.00"), std::string::npos);
  EXPECT_NE(txt.str().find("12.50"), std::string::npos);
  EXPECT_NE(txt.str().find("4.50"), std::string::npos);
}

TEST(Spans, ExtractionRules) {
  using S = std::vector<Span>;
  EXPECT_EQ(extract_spans({"B-PER", "I-PER", "O", "B-LOC"}), (S{{"PER", 0, 1}, {"LOC", 3, 3}}));
  EXPECT_EQ(extract_spans({"I-LOC", "I-LOC"}), (S{{"LOC", 0, 1}}));
  EXPECT_EQ(extract_spans({"B-PER", "I-LOC"}), (S{{"PER", 0, 0}, {"LOC", 1, 1}}));
  EXPECT_EQ(extract_spans({"B-PER", "B-PER"}), (S{{"PER", 0, 0}, {"PER", 1, 1}}));
  EXPECT_TRUE(extract_spans({"O", "O"}).empty());
}

TEST(Spans, WorkedExamples) {
  const auto half = span_f1(split_labels({"B-PER O B-LOC"}), split_labels({"B-PER O B-PER"}));
  EXPECT_EQ(half.true_positives, 1u);
  EXPECT_DOUBLE_EQ(half.f1, 0.5);
  const auto boundary = span_f1(split_labels({"B-PER I-PER O"}), split_labels({"B-PER O O"}));
  EXPECT_EQ(boundary.true_positives, 0u);
  EXPECT_DOUBLE_EQ(boundary.f1, 0.0);
  const auto perfect = span_f1(split_labels({"B-PER I-PER O B-LOC"}), split_labels({"B-PER I-PER O B-LOC"}));
  EXPECT_DOUBLE_EQ(perfect.f1, 1.0);
  const auto none = span_f1(split_labels({"O O"}), split_labels({"O O"}));
  EXPECT_DOUBLE_EQ(none.f1, 0.0);
  EXPECT_THROW(span_f1(split_labels({"O O"}), split_labels({"O"})), std::invalid_argument);
}

TEST(Spans, AgreesWithIndependentReader) {
  const std::vector<std::string> kinds = {"O", "O", "B-PER", "I-PER", "B-LOC", "I-LOC", "B-ORG", "I-ORG"};
  Rng rng(12);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n_seq = 1 + uniform_index(rng, 3);
    std::vector<std::vector<std::string>> gold(n_seq), pred(n_seq);
    std::set<std::tuple<std::size_t, std::size_t, std::size_t, std::string>> g, p;
    for (std::size_t s = 0; s < n_seq; ++s) {
      const std::size_t len = 1 + uniform_index(rng, 15);
      for (std::size_t i = 0; i < len; ++i) {
        gold[s].push_back(kinds[uniform_index(rng, kinds.size())]);
        pred[s].push_back(uniform01(rng) < 0.6 ? gold[s].back() : kinds[uniform_index(rng, kinds.size())]);
      }
      for (const auto& x : oracle_spans(s, gold[s])) g.insert(x);
      for (const auto& x : oracle_spans(s, pred[s])) p.insert(x);
    }
    std::size_t tp = 0;
    for (const auto& x : p) tp += g.count(x);
    const double prec = p.empty() ? 0.0 : static_cast<double>(tp) / p.size();
    const double rec = g.empty() ? 0.0 : static_cast<double>(tp) / g.size();
    const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    const auto s = span_f1(gold, pred);
    EXPECT_EQ(s.true_positives, tp);
    EXPECT_NEAR(s.f1, f1, 1e-12);
  }
}

TEST(ScoreTags, AccuracyAndSpans) {
  const TaggedCorpus gold = tagged({{"a b c", "B-PER I-PER O"}, {"d", "B-LOC"}}, TagScheme::bio);
  const auto s = score_tags(gold, {{"B-PER", "O", "O"}, {"B-LOC"}});
  EXPECT_DOUBLE_EQ(s.accuracy, 0.75);
  EXPECT_EQ(s.tokens, 4u);
  ASSERT_TRUE(s.spans);
  EXPECT_EQ(s.spans->true_positives, 1u);
  const TaggedCorpus upos = tagged({{"a b", "NOUN VERB"}}, TagScheme::upos);
  EXPECT_FALSE(score_tags(upos, {{"NOUN", "NOUN"}}).spans);
}

namespace {

// Words from two disjoint lexicons tagged NOUN and VERB.
TaggedCorpus separable(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::pair<std::string, std::string>> rows;
  for (std::size_t i = 0; i < n; ++i) {
    std::string toks, labs;
    const std::size_t len = 3 + uniform_index(rng, 6);
    for (std::size_t j = 0; j < len; ++j) {
      const bool noun = uniform01(rng) < 0.4;
      const auto w = uniform_index(rng, 10);
      toks += (j ? " " : "") + std::string(noun ? "w" : "w1") + std::to_string(w);
      labs += (j ? " " : "") + std::string(noun ? "NOUN" : "VERB");
    }
    rows.emplace_back(toks, labs);
  }
  return tagged(rows, TagScheme::upos);
}

}  // namespace

TEST(Tagger, LearnsSeparableTask) {
  const Vocab v = letters_vocab(20);  // w0..w19; "w1x" tokens are w10..w19
  const EncoderParams enc = init_encoder({"micro", 1, 16, 2, 16}, v.size(), 1);
  TaggerTrainOptions opt;
  opt.epochs = 8;
  opt.lr = 1e-2;
  opt.seed = 3;
  const auto r = finetune_tagger(enc, v, separable(120, 1), separable(30, 2), opt);
  EXPECT_EQ(r.dev_curve.size(), 8u);
  EXPECT_GE(r.best_epoch, 1);
  EXPECT_DOUBLE_EQ(r.dev_curve[static_cast<std::size_t>(r.best_epoch - 1)],
                   *std::max_element(r.dev_curve.begin(), r.dev_curve.end()));
  EXPECT_GE(evaluate_tagger(r.tagger, v, separable(40, 3)).accuracy, 0.99);
}

TEST(Tagger, ZeroEpochsPredictsMajorityTag) {
  const Vocab v = letters_vocab(20);
  const EncoderParams enc = init_encoder({"micro", 1, 16, 2, 16}, v.size(), 1);
  TaggerTrainOptions opt;
  opt.epochs = 0;
  const auto r = finetune_tagger(enc, v, separable(60, 1), separable(10, 2), opt);
  EXPECT_EQ(r.best_epoch, 0);
  for (const auto& seq : predict_tags(r.tagger, v, separable(10, 3)))
    for (const auto& t : seq) EXPECT_EQ(t, "VERB");
}

TEST(Tagger, DeterministicPerSeedAndCountsUnknownDevLabels) {
  const Vocab v = letters_vocab(20);
  const EncoderParams enc = init_encoder({"micro", 1, 16, 2, 16}, v.size(), 1);
  TaggerTrainOptions opt;
  opt.epochs = 2;
  opt.seed = 5;
  TaggedCorpus dev = separable(10, 2);
  dev.sequences[0].labels[0] = "ADJ";
  dev.tagset.insert("ADJ");
  const auto a = finetune_tagger(enc, v, separable(40, 1), dev, opt);
  const auto b = finetune_tagger(enc, v, separable(40, 1), dev, opt);
  EXPECT_EQ(a.dev_curve, b.dev_curve);
  EXPECT_EQ(a.tagger.head_weight.values, b.tagger.head_weight.values);
  EXPECT_EQ(a.unknown_dev_labels, 1u);
}

TEST(Tagger, LongSequencesAreChunked) {
  const Vocab v = letters_vocab(20);
  const EncoderParams enc = init_encoder({"micro", 1, 16, 2, 8}, v.size(), 1);
  std::string toks, labs;
  for (int i = 0; i < 21; ++i) {
    toks += (i ? " w" : "w") + std::to_string(i % 20);
    labs += i ? " X" : "X";
  }
  const TaggedCorpus t = tagged({{toks, labs}}, TagScheme::upos);
  TaggerTrainOptions opt;
  opt.epochs = 1;
  const auto r = finetune_tagger(enc, v, t, t, opt);
  const auto pred = predict_tags(r.tagger, v, t);
  ASSERT_EQ(pred[0].size(), 21u);
  EXPECT_DOUBLE_EQ(evaluate_tagger(r.tagger, v, t).accuracy, 1.0);
}
