#include "creole/langid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <stdexcept>

#include "creole/error.hpp"
#include "creole/rng.hpp"
#include "creole/text.hpp"

namespace creole {

namespace {

constexpr char32_t kBoundary = U'\x02';
constexpr char32_t kOutOfAlphabet = 0x110000;  // beyond Unicode, cannot collide
constexpr std::size_t kMinSentences = 50;

std::u32string padded(const std::u32string& normalized, int n_max) {
  return std::u32string(static_cast<std::size_t>(n_max - 1), kBoundary) + normalized;
}

}  // namespace

double ConfidenceMap::at(std::string_view language) const {
  for (std::size_t i = 0; i < languages.size(); ++i)
    if (languages[i] == language) return scores[i];
  throw std::out_of_range("language '" + std::string(language) + "' not in confidence map");
}

std::size_t ConfidenceMap::argmax() const {
  return static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

std::u32string normalize_for_identification(std::string_view sentence) {
  std::u32string out;
  bool pending_space = false;
  for (char32_t cp : text::decode_utf8(sentence)) {
    if (text::is_letter(cp)) {
      if (pending_space && !out.empty()) out.push_back(U' ');
      pending_space = false;
      out.push_back(text::to_lower(cp));
    } else {
      pending_space = true;
    }
  }
  return out;
}

Identifier Identifier::train(const std::vector<Corpus>& labeled, int n_max, double alpha) {
  if (labeled.size() < 2) throw std::invalid_argument("identifier needs at least 2 languages");
  if (n_max < 1) throw std::invalid_argument("n_max must be >= 1");
  if (!(alpha >= 0.0) || !std::isfinite(alpha))
    throw std::invalid_argument("smoothing alpha must be finite and >= 0");

  Identifier id;
  id.n_max_ = n_max;
  id.alpha_ = alpha;
  std::set<std::string> tags;
  for (const auto& c : labeled) {
    const std::string& tag = c.language_inventory().front();
    if (!tags.insert(tag).second) throw std::invalid_argument("duplicate language tag '" + tag + "'");
    if (c.size() < kMinSentences)
      throw std::invalid_argument("corpus for '" + tag + "' has fewer than " +
                                  std::to_string(kMinSentences) + " sentences");
    id.languages_.push_back(tag);
  }
  id.tables_.assign(labeled.size(), std::vector<OrderTable>(static_cast<std::size_t>(n_max)));
  for (std::size_t l = 0; l < labeled.size(); ++l)
    for (const auto& s : labeled[l].sentences()) id.add_counts(l, normalize_for_identification(s.text));

  std::set<char32_t> alphabet;
  for (const auto& per_lang : id.tables_)
    for (const auto& [ctx, counts] : per_lang.front())
      for (const auto& [c, n] : counts.next) alphabet.insert(c);
  id.alphabet_.assign(alphabet.begin(), alphabet.end());
  return id;
}

void Identifier::add_counts(std::size_t language, const std::u32string& normalized) {
  if (normalized.empty()) return;
  const std::u32string p = padded(normalized, n_max_);
  for (std::size_t pos = static_cast<std::size_t>(n_max_ - 1); pos < p.size(); ++pos) {
    for (int n = 1; n <= n_max_; ++n) {
      const std::u32string ctx = p.substr(pos - static_cast<std::size_t>(n - 1),
                                          static_cast<std::size_t>(n - 1));
      auto& counts = tables_[language][static_cast<std::size_t>(n - 1)][ctx];
      ++counts.next[p[pos]];
      ++counts.total;
    }
  }
}

char32_t Identifier::canonical(char32_t c) const {
  if (c == kBoundary) return c;
  return std::binary_search(alphabet_.begin(), alphabet_.end(), c) ? c : kOutOfAlphabet;
}

double Identifier::order_probability(std::size_t language, int order,
                                     const std::u32string& context, char32_t c) const {
  const double a = static_cast<double>(alphabet_size());
  const auto& table = tables_[language][static_cast<std::size_t>(order - 1)];
  const auto it = table.find(context);
  if (it == table.end()) return 1.0 / a;
  const double denom = static_cast<double>(it->second.total) + alpha_ * a;
  if (denom <= 0.0) return 1.0 / a;
  const auto hit = it->second.next.find(c);
  const double count = hit == it->second.next.end() ? 0.0 : static_cast<double>(hit->second);
  return (count + alpha_) / denom;
}

double Identifier::char_probability(std::size_t language, const std::u32string& p,
                                    std::size_t pos) const {
  double sum = 0.0;
  const char32_t c = canonical(p[pos]);
  for (int n = 1; n <= n_max_; ++n) {
    std::u32string ctx = p.substr(pos - static_cast<std::size_t>(n - 1),
                                  static_cast<std::size_t>(n - 1));
    for (auto& ch : ctx) ch = canonical(ch);
    sum += order_probability(language, n, ctx, c);
  }
  return sum / n_max_;
}

std::vector<double> Identifier::conditional(std::size_t language, int order,
                                            const std::u32string& context) const {
  if (language >= languages_.size() || order < 1 || order > n_max_)
    throw std::out_of_range("bad language or order");
  std::vector<double> out;
  out.reserve(alphabet_size());
  for (char32_t c : alphabet_) out.push_back(order_probability(language, order, context, c));
  out.push_back(order_probability(language, order, context, kOutOfAlphabet));
  return out;
}

std::vector<double> Identifier::mean_log_likelihoods(std::string_view sentence) const {
  const std::u32string norm = normalize_for_identification(sentence);
  std::vector<double> out(languages_.size(), 0.0);
  if (norm.empty()) return out;
  const std::u32string p = padded(norm, n_max_);
  const std::size_t start = static_cast<std::size_t>(n_max_ - 1);
  for (std::size_t l = 0; l < languages_.size(); ++l) {
    double ll = 0.0;
    for (std::size_t pos = start; pos < p.size(); ++pos)
      ll += std::log(std::max(char_probability(l, p, pos), kProbabilityFloor));
    out[l] = ll / static_cast<double>(norm.size());
  }
  return out;
}

ConfidenceMap Identifier::identify(std::string_view sentence) const {
  ConfidenceMap conf;
  conf.languages = languages_;
  const std::size_t n = languages_.size();
  if (normalize_for_identification(sentence).empty()) {
    conf.fallback = true;
    conf.scores.assign(n, 1.0 / static_cast<double>(n));
    return conf;
  }
  const auto ll = mean_log_likelihoods(sentence);
  const double mx = *std::max_element(ll.begin(), ll.end());
  conf.scores.resize(n);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) z += conf.scores[i] = std::exp(ll[i] - mx);
  for (auto& s : conf.scores) s /= z;
  return conf;
}

void Identifier::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << "creole-langid\t1\n" << "n_max\t" << n_max_ << '\n'
      << "alpha\t" << std::setprecision(17) << alpha_ << '\n' << "languages";
  for (const auto& l : languages_) out << '\t' << l;
  out << '\n';
  for (std::size_t l = 0; l < tables_.size(); ++l) {
    for (std::size_t o = 0; o < tables_[l].size(); ++o) {
      // Sorted so identical identifiers serialize identically.
      std::map<std::u32string, const ContextCounts*> ordered;
      for (const auto& [ctx, counts] : tables_[l][o]) ordered[ctx] = &counts;
      for (const auto& [ctx, counts] : ordered) {
        std::map<char32_t, std::uint64_t> next(counts->next.begin(), counts->next.end());
        for (const auto& [c, n] : next)
          out << l << '\t' << o + 1 << '\t' << text::encode_utf8(ctx) << '\t'
              << text::encode_utf8(std::u32string(1, c)) << '\t' << n << '\n';
      }
    }
  }
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

Identifier Identifier::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  const std::string p = path.string();
  std::string line;
  std::size_t line_no = 0;
  auto next_fields = [&]() {
    if (!std::getline(in, line)) throw FormatError(p, line_no, "truncated identifier file");
    ++line_no;
    return text::split(line, '\t');
  };
  Identifier id;
  try {
    auto f = next_fields();
    if (f.size() != 2 || f[0] != "creole-langid" || f[1] != "1")
      throw FormatError(p, line_no, "not an identifier file");
    f = next_fields();
    id.n_max_ = std::stoi(f.at(1));
    f = next_fields();
    id.alpha_ = std::stod(f.at(1));
    f = next_fields();
    if (f.empty() || f[0] != "languages") throw FormatError(p, line_no, "missing languages row");
    id.languages_.assign(f.begin() + 1, f.end());
    if (id.n_max_ < 1 || id.languages_.size() < 2) throw FormatError(p, line_no, "bad header");
    id.tables_.assign(id.languages_.size(),
                      std::vector<OrderTable>(static_cast<std::size_t>(id.n_max_)));
    std::set<char32_t> alphabet;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      f = text::split(line, '\t');
      if (f.size() != 5) throw FormatError(p, line_no, "expected 5 fields");
      const auto l = std::stoul(f[0]);
      const auto o = std::stoul(f[1]);
      const std::u32string c = text::decode_utf8(f[3]);
      if (l >= id.languages_.size() || o < 1 || o > static_cast<unsigned long>(id.n_max_) ||
          c.size() != 1)
        throw FormatError(p, line_no, "bad count row");
      auto& counts = id.tables_[l][o - 1][text::decode_utf8(f[2])];
      const std::uint64_t n = std::stoull(f[4]);
      counts.next[c[0]] += n;
      counts.total += n;
      if (o == 1) alphabet.insert(c[0]);
    }
    id.alphabet_.assign(alphabet.begin(), alphabet.end());
  } catch (const std::invalid_argument&) {
    throw FormatError(p, line_no, "unparseable number");
  } catch (const std::out_of_range&) {
    throw FormatError(p, line_no, "missing field or number out of range");
  }
  return id;
}

GroupAssignment assign_group(const ConfidenceMap& conf, double threshold) {
  if (!(threshold >= 0.0 && threshold < 1.0))
    throw std::invalid_argument("threshold must lie in [0, 1)");
  if (conf.languages.size() != conf.scores.size() || conf.languages.size() > 63)
    throw std::invalid_argument("malformed confidence map");
  GroupAssignment g;
  for (std::size_t i = 0; i < conf.scores.size(); ++i) {
    if (conf.scores[i] >= threshold) {
      g.group_id |= std::uint64_t{1} << i;
      g.present_languages.push_back(conf.languages[i]);
    }
  }
  return g;
}

std::pair<std::vector<int>, std::vector<std::uint64_t>> dense_relabel(
    const std::vector<std::uint64_t>& raw_keys) {
  std::vector<std::uint64_t> keys(raw_keys);
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  std::vector<int> dense;
  dense.reserve(raw_keys.size());
  for (auto k : raw_keys)
    dense.push_back(static_cast<int>(std::lower_bound(keys.begin(), keys.end(), k) - keys.begin()));
  return {std::move(dense), std::move(keys)};
}

GroupedDataset annotate_groups(const Corpus& dataset, const Identifier* identifier,
                               const GroupingOptions& options) {
  std::vector<std::uint64_t> raw(dataset.size(), 0);
  switch (options.strategy) {
    case GroupStrategy::one:
      break;
    case GroupStrategy::random: {
      if (options.group_count == 0) throw std::invalid_argument("group_count must be positive");
      Rng rng(mix_seed(options.seed, 0x6E0));
      for (auto& k : raw) k = uniform_index(rng, options.group_count);
      break;
    }
    case GroupStrategy::language: {
      if (dataset.language_inventory().size() > 1) {
        for (std::size_t i = 0; i < dataset.size(); ++i)
          raw[i] = *dataset.language_index(dataset[i].source_language);
      } else {
        if (!identifier)
          throw std::invalid_argument(
              "language grouping of single-language data requires a language identifier");
        for (std::size_t i = 0; i < dataset.size(); ++i)
          raw[i] = assign_group(identifier->identify(dataset[i]), options.threshold).group_id;
      }
      break;
    }
  }
  auto [dense, keys] = dense_relabel(raw);
  GroupedDataset out{dataset, std::move(dense), keys.size(), std::move(keys), options.strategy};
  return out;
}

LanguageDistribution language_distribution_report(const Corpus& dataset,
                                                  const Identifier& identifier,
                                                  double threshold) {
  const auto& langs = identifier.languages();
  constexpr std::size_t bins = LanguageDistribution::kBins;
  std::vector<std::vector<std::size_t>> counts(langs.size(), std::vector<std::size_t>(bins, 0));
  LanguageDistribution dist;
  dist.present_counts.assign(langs.size(), 0);
  for (const auto& s : dataset.sentences()) {
    const auto conf = identifier.identify(s);
    if (conf.fallback) ++dist.fallback_sentences;
    for (std::size_t l = 0; l < langs.size(); ++l) {
      const double v = conf.scores[l];
      const auto b = std::min(bins - 1, static_cast<std::size_t>(v * static_cast<double>(bins)));
      ++counts[l][b];
      if (v >= threshold) ++dist.present_counts[l];
    }
  }
  for (std::size_t l = 0; l < langs.size(); ++l)
    for (std::size_t b = 0; b < bins; ++b)
      dist.rows.push_back({langs[l], static_cast<double>(b) / bins,
                           static_cast<double>(b + 1) / bins, counts[l][b]});
  return dist;
}

void write_histogram_tsv(std::ostream& out, const LanguageDistribution& dist) {
  out << "language\tbin_lo\tbin_hi\tcount\n";
  out << std::fixed << std::setprecision(2);
  for (const auto& r : dist.rows)
    out << r.language << '\t' << r.bin_lo << '\t' << r.bin_hi << '\t' << r.count << '\n';
  out.unsetf(std::ios::floatfield);
}

}  // namespace creole
