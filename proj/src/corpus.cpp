#include "rhomp/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

#include <fmt/format.h>

#include "rhomp/parallel.hpp"
#include "rhomp/random.hpp"

namespace rhomp {

double SparseVector::sum() const { return std::accumulate(value.begin(), value.end(), 0.0); }

double SparseVector::at(StateId i) const {
  auto it = std::lower_bound(index.begin(), index.end(), i);
  if (it == index.end() || *it != i) return 0.0;
  return value[static_cast<std::size_t>(it - index.begin())];
}

// ---------------------------------------------------------------------------
// StateSpace

StateSpace::StateSpace(std::vector<std::string> tokens) {
  for (auto& t : tokens) {
    if (index_.count(t)) throw DataError(fmt::format("duplicate state token '{}'", t));
    index_.emplace(t, static_cast<StateId>(tokens_.size()));
    tokens_.push_back(std::move(t));
  }
}

StateId StateSpace::intern(std::string_view token) {
  auto it = index_.find(std::string(token));
  if (it != index_.end()) return it->second;
  const auto id = static_cast<StateId>(tokens_.size());
  tokens_.emplace_back(token);
  index_.emplace(tokens_.back(), id);
  return id;
}

std::optional<StateId> StateSpace::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

StateSpace StateSpace::subset(std::span<const StateId> kept) const {
  std::vector<std::string> tokens;
  tokens.reserve(kept.size());
  for (StateId s : kept) tokens.push_back(tokens_.at(s));
  return StateSpace(std::move(tokens));
}

// ---------------------------------------------------------------------------
// TrailCorpus

std::size_t TrailCorpus::num_transitions() const {
  std::size_t n = 0;
  for (const auto& t : trails) n += t.empty() ? 0 : t.size() - 1;
  return n;
}

void TrailCorpus::validate() const {
  for (std::size_t i = 0; i < trails.size(); ++i) {
    if (trails[i].empty()) throw DataError(fmt::format("trail {} is empty", i));
    for (StateId s : trails[i])
      if (s >= num_states)
        throw DataError(fmt::format("trail {} has state {} outside [0, {})", i, s, num_states));
  }
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

bool valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t extra;
    std::uint32_t cp;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      extra = 1;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      extra = 2;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      extra = 3;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + extra >= s.size()) return false;
    for (std::size_t k = 1; k <= extra; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    // Overlong encodings, surrogates and out-of-range code points.
    static constexpr std::uint32_t kMin[] = {0, 0x80, 0x800, 0x10000};
    if (cp < kMin[extra] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
    i += extra + 1;
  }
  return true;
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v'; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

/// Tokens of one line; empty when the line is blank.
std::vector<std::string_view> tokenize(std::string_view line, TrailFormat format,
                                       std::size_t line_no) {
  std::vector<std::string_view> out;
  if (!valid_utf8(line)) throw DataError(fmt::format("line {}: invalid UTF-8", line_no));
  line = trim(line);
  if (line.empty()) return out;
  if (format == TrailFormat::Whitespace) {
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && is_space(line[i])) ++i;
      std::size_t j = i;
      while (j < line.size() && !is_space(line[j])) ++j;
      if (j > i) out.push_back(line.substr(i, j - i));
      i = j;
    }
  } else {
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      auto field = trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                             : comma - start));
      if (field.empty()) throw DataError(fmt::format("line {}: empty field", line_no));
      out.push_back(field);
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
  }
  return out;
}

template <class OnLine>
void for_each_line(std::istream& in, OnLine&& on_line) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) on_line(std::string_view(line), ++line_no);
  if (in.bad()) throw IoError("read failure on trail stream");
}

}  // namespace

ParsedCorpus parse_trails(std::istream& in, TrailFormat format) {
  ParsedCorpus out;
  for_each_line(in, [&](std::string_view line, std::size_t line_no) {
    auto tokens = tokenize(line, format, line_no);
    if (tokens.empty()) return;
    Trail trail;
    trail.reserve(tokens.size());
    for (auto tok : tokens) trail.push_back(out.states.intern(tok));
    out.corpus.trails.push_back(std::move(trail));
  });
  if (out.corpus.empty()) throw DataError("empty corpus: no trails in input");
  out.corpus.num_states = out.states.size();
  return out;
}

TrailCorpus parse_trails(std::istream& in, TrailFormat format, const StateSpace& vocabulary) {
  TrailCorpus out;
  out.num_states = vocabulary.size();
  bool any_line = false;
  for_each_line(in, [&](std::string_view line, std::size_t line_no) {
    auto tokens = tokenize(line, format, line_no);
    if (tokens.empty()) return;
    any_line = true;
    Trail trail;
    for (auto tok : tokens) {
      if (auto id = vocabulary.find(tok)) {
        trail.push_back(*id);
      } else if (!trail.empty()) {
        out.trails.push_back(std::move(trail));
        trail.clear();
      }
    }
    if (!trail.empty()) out.trails.push_back(std::move(trail));
  });
  if (!any_line) throw DataError("empty corpus: no trails in input");
  return out;
}

void write_trails(std::ostream& out, const StateSpace& states, const TrailCorpus& corpus,
                  TrailFormat format) {
  const char sep = format == TrailFormat::Comma ? ',' : ' ';
  for (const auto& trail : corpus.trails) {
    for (std::size_t t = 0; t < trail.size(); ++t) {
      if (t) out << sep;
      out << states.token(trail[t]);
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Preprocessing and splitting

ParsedCorpus preprocess(const StateSpace& states, const TrailCorpus& corpus,
                        const PreprocessOptions& options) {
  std::vector<Trail> trails;
  trails.reserve(corpus.trails.size());
  for (const auto& trail : corpus.trails) {
    Trail t;
    t.reserve(trail.size());
    for (StateId s : trail)
      if (!options.drop_self_loops || t.empty() || t.back() != s) t.push_back(s);
    trails.push_back(std::move(t));
  }

  std::vector<std::uint64_t> occurrences(corpus.num_states);
  while (true) {
    std::fill(occurrences.begin(), occurrences.end(), 0);
    for (const auto& t : trails)
      for (StateId s : t) ++occurrences[s];
    auto rare = [&](StateId s) { return occurrences[s] <= options.min_state_count; };

    bool changed = false;
    std::vector<Trail> next;
    next.reserve(trails.size());
    for (auto& t : trails) {
      Trail piece;
      auto flush = [&] {
        if (piece.size() >= 2) next.push_back(std::move(piece));
        else if (!piece.empty()) changed = true;
        piece.clear();
      };
      for (StateId s : t) {
        if (rare(s)) {
          changed = true;
          flush();
        } else {
          piece.push_back(s);
        }
      }
      flush();
    }
    trails = std::move(next);
    if (!changed) break;
  }

  std::vector<StateId> kept;
  std::vector<StateId> remap(corpus.num_states, 0);
  for (StateId s = 0; s < corpus.num_states; ++s) {
    if (occurrences[s] > 0) {
      remap[s] = static_cast<StateId>(kept.size());
      kept.push_back(s);
    }
  }
  ParsedCorpus out;
  out.states = states.subset(kept);
  out.corpus.num_states = kept.size();
  for (auto& t : trails)
    for (auto& s : t) s = remap[s];
  out.corpus.trails = std::move(trails);
  return out;
}

std::pair<TrailCorpus, TrailCorpus> split_train_test(const TrailCorpus& corpus,
                                                     double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw DataError(fmt::format("train fraction {} outside (0, 1)", train_fraction));
  const std::size_t n = corpus.size();
  if (n < 2) throw DataError("need at least two trails to split");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);

  const auto wanted = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  const std::size_t n_train = std::clamp<std::size_t>(wanted, 1, n - 1);
  std::vector<bool> in_train(n, false);
  for (std::size_t i = 0; i < n_train; ++i) in_train[order[i]] = true;

  TrailCorpus train{corpus.num_states, {}}, test{corpus.num_states, {}};
  for (std::size_t i = 0; i < n; ++i) (in_train[i] ? train : test).trails.push_back(corpus.trails[i]);
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Counting

CountTable::CountTable(std::size_t history, std::vector<StateId> keys,
                       std::vector<std::uint64_t> counts)
    : history_(history) {
  const std::size_t stride = history + 1;
  if (keys.size() != counts.size() * stride)
    throw DataError("count table keys and counts disagree in length");
  const std::size_t n = counts.size();
  auto key_at = [&](std::size_t e) {
    return std::span<const StateId>(keys.data() + e * stride, stride);
  };
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) {
    auto ka = key_at(a), kb = key_at(b);
    return std::lexicographical_compare(ka.begin(), ka.end(), kb.begin(), kb.end());
  });
  for (std::size_t p = 0; p < n; ++p) {
    const std::size_t e = perm[p];
    if (counts[e] == 0) continue;
    auto k = key_at(e);
    if (!counts_.empty() &&
        std::equal(k.begin(), k.end(), keys_.end() - static_cast<std::ptrdiff_t>(stride))) {
      counts_.back() += counts[e];
    } else {
      keys_.insert(keys_.end(), k.begin(), k.end());
      counts_.push_back(counts[e]);
    }
  }
  for (std::size_t e = 0; e < counts_.size(); ++e) {
    auto ctx = context(e);
    context_totals_[std::vector<StateId>(ctx.begin(), ctx.end())] += counts_[e];
    total_ += counts_[e];
  }
}

std::uint64_t CountTable::count_of(std::span<const StateId> key) const {
  if (key.size() != history_ + 1) return 0;
  std::size_t lo = 0, hi = size();
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    auto k = this->key(mid);
    if (std::lexicographical_compare(k.begin(), k.end(), key.begin(), key.end())) lo = mid + 1;
    else hi = mid;
  }
  if (lo < size() && std::ranges::equal(this->key(lo), key)) return counts_[lo];
  return 0;
}

std::uint64_t CountTable::context_total(std::span<const StateId> context) const {
  auto it = context_totals_.find(std::vector<StateId>(context.begin(), context.end()));
  return it == context_totals_.end() ? 0 : it->second;
}

TransitionCounts::TransitionCounts(std::size_t order, std::size_t num_states,
                                   std::vector<std::uint64_t> unigram,
                                   std::vector<CountTable> levels)
    : num_states_(num_states), unigram_(std::move(unigram)), levels_(std::move(levels)) {
  if (order < 1) throw DataError("count order must be at least 1");
  if (levels_.size() != order) throw DataError("count levels disagree with order");
  if (unigram_.size() != num_states) throw DataError("unigram size disagrees with state count");
  for (std::size_t r = 1; r <= order; ++r) {
    const auto& table = levels_[r - 1];
    if (table.history() != r && !table.empty())
      throw DataError(fmt::format("level {} table has history {}", r, table.history()));
    for (std::size_t e = 0; e < table.size(); ++e)
      for (StateId s : table.key(e))
        if (s >= num_states)
          throw DataError(fmt::format("count key state {} outside [0, {})", s, num_states));
  }
}

const CountTable& TransitionCounts::level(std::size_t r) const {
  if (r < 1 || r > levels_.size())
    throw DataError(fmt::format("no count level {} (order {})", r, levels_.size()));
  return levels_[r - 1];
}

TransitionCounts TransitionCounts::truncated(std::size_t order) const {
  if (order < 1 || order > levels_.size())
    throw DataError(fmt::format("cannot truncate order-{} counts to order {}", levels_.size(), order));
  return TransitionCounts(order, num_states_, unigram_,
                          std::vector<CountTable>(levels_.begin(), levels_.begin() + static_cast<std::ptrdiff_t>(order)));
}

TransitionCounts TransitionCounts::merge(const TransitionCounts& a, const TransitionCounts& b) {
  if (a.order() != b.order() || a.num_states() != b.num_states())
    throw DataError("cannot merge counts of different shape");
  std::vector<std::uint64_t> unigram(a.unigram_);
  for (std::size_t s = 0; s < unigram.size(); ++s) unigram[s] += b.unigram_[s];
  std::vector<CountTable> levels;
  for (std::size_t r = 1; r <= a.order(); ++r) {
    std::vector<StateId> keys;
    std::vector<std::uint64_t> counts;
    for (const auto* t : {&a.level(r), &b.level(r)}) {
      for (std::size_t e = 0; e < t->size(); ++e) {
        auto k = t->key(e);
        keys.insert(keys.end(), k.begin(), k.end());
        counts.push_back(t->count(e));
      }
    }
    levels.emplace_back(r, std::move(keys), std::move(counts));
  }
  return TransitionCounts(a.order(), a.num_states(), std::move(unigram), std::move(levels));
}

namespace {

TransitionCounts count_range(const TrailCorpus& corpus, std::size_t order, std::size_t begin,
                             std::size_t end) {
  std::vector<std::uint64_t> unigram(corpus.num_states, 0);
  std::vector<std::vector<StateId>> keys(order);
  std::vector<std::vector<std::uint64_t>> counts(order);
  for (std::size_t n = begin; n < end; ++n) {
    const auto& trail = corpus.trails[n];
    for (std::size_t t = 0; t < trail.size(); ++t) {
      ++unigram[trail[t]];
      for (std::size_t r = 1; r <= std::min(order, t); ++r) {
        auto& k = keys[r - 1];
        k.push_back(trail[t]);
        for (std::size_t back = 1; back <= r; ++back) k.push_back(trail[t - back]);
        counts[r - 1].push_back(1);
      }
    }
  }
  std::vector<CountTable> levels;
  for (std::size_t r = 1; r <= order; ++r)
    levels.emplace_back(r, std::move(keys[r - 1]), std::move(counts[r - 1]));
  return TransitionCounts(order, corpus.num_states, std::move(unigram), std::move(levels));
}

}  // namespace

TransitionCounts count_transitions(const TrailCorpus& corpus, std::size_t order, unsigned threads) {
  if (order < 1) throw DataError("count order must be at least 1");
  corpus.validate();
  const std::size_t parts = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(corpus.size(), 1));
  std::vector<TransitionCounts> partial(parts);
  parallel_for(parts, static_cast<unsigned>(parts), [&](std::size_t b, std::size_t e) {
    for (std::size_t p = b; p < e; ++p)
      partial[p] = count_range(corpus, order, corpus.size() * p / parts,
                               corpus.size() * (p + 1) / parts);
  });
  TransitionCounts total = std::move(partial[0]);
  for (std::size_t p = 1; p < parts; ++p) total = TransitionCounts::merge(total, partial[p]);
  return total;
}

void write_counts(std::ostream& out, const TransitionCounts& counts) {
  for (std::size_t r = 1; r <= counts.order(); ++r) {
    const auto& table = counts.level(r);
    for (std::size_t e = 0; e < table.size(); ++e) {
      for (StateId s : table.key(e)) out << s << '\t';
      out << table.count(e) << '\n';
    }
  }
}

}  // namespace rhomp
