#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include "erc/error.hpp"
#include "erc/retrieval.hpp"
#include "test_support.hpp"

using namespace erc;

namespace {

const LabelSpace kSpace("toy", {"joy", "sad", "neutral", "anger"});

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an erc::Error");
    return ErrorCode::Io;
}

// Reference tokenizer for ASCII text.
std::vector<std::string> ascii_tokens(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::string reference_flatten(const std::vector<Turn>& context, const std::string& speaker, const std::string& text) {
    std::string out;
    for (const auto& t : context) out += t.speaker + ": " + t.text + "\n";
    return out + speaker + ": " + text;
}

// Scores every document straight from the Okapi formula.
struct Bm25Oracle {
    std::vector<std::vector<std::string>> docs;
    double k1 = 1.2;
    double b = 0.75;

    double score(const std::vector<std::string>& query, std::size_t d) const {
        const double n_docs = static_cast<double>(docs.size());
        double total_len = 0;
        for (const auto& doc : docs) total_len += static_cast<double>(doc.size());
        const double avgdl = total_len / n_docs;
        double s = 0.0;
        for (const auto& term : query) {
            double df = 0;
            for (const auto& doc : docs) df += std::count(doc.begin(), doc.end(), term) > 0 ? 1 : 0;
            const double f = static_cast<double>(std::count(docs[d].begin(), docs[d].end(), term));
            if (f == 0) continue;
            const double idf = std::log((n_docs - df + 0.5) / (df + 0.5) + 1.0);
            const double len = static_cast<double>(docs[d].size());
            s += idf * f * (k1 + 1) / (f + k1 * (1 - b + b * len / avgdl));
        }
        return s;
    }
};

struct Ranked {
    std::size_t id;
    double score;
};

std::vector<Ranked> oracle_top_k(std::vector<Ranked> all, std::size_t k) {
    std::sort(all.begin(), all.end(), [](const Ranked& a, const Ranked& b) {
        return a.score != b.score ? a.score > b.score : a.id < b.id;
    });
    all.resize(std::min(k, all.size()));
    return all;
}

DemonstrationPool random_pool(Rng& rng, std::size_t dialogues, std::size_t max_turns) {
    return build_pool(test::random_corpus(rng, kSpace, dialogues, max_turns));
}

std::vector<Query> random_queries(Rng& rng, std::size_t dialogues, std::size_t max_turns, const std::string& prefix) {
    return queries_from_corpus(test::random_corpus(rng, kSpace, dialogues, max_turns, Split::Test, prefix));
}

DemonstrationPool with_vectors(const DemonstrationPool& pool, Rng& rng, std::size_t dim) {
    EmbeddingStore store;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        std::vector<float> v(dim);
        for (auto& x : v) x = static_cast<float>(static_cast<int>(rng.below(5)) - 2);  // coarse: forces ties
        store.set(i, v);
    }
    return attach_embeddings(pool, store);
}

void give_vectors(std::vector<Query>& queries, Rng& rng, std::size_t dim) {
    for (auto& q : queries) {
        q.embedding.resize(dim);
        for (auto& x : q.embedding) x = static_cast<float>(static_cast<int>(rng.below(5)) - 2);
    }
}

}  // namespace

TEST_CASE("flattening") {
    CHECK(flatten({}, "A", "hello") == "A: hello");
    const std::vector<Turn> one{{"A", "hi"}};
    CHECK(flatten(one, "B", "hey") == "A: hi\nB: hey");
    const std::vector<Turn> three{{"A", "Where were you?"}, {"B", "Out."}, {"A", "All night?"}};
    CHECK(flatten(three, "B", "Yes.") == "A: Where were you?\nB: Out.\nA: All night?\nB: Yes.");
    CHECK(make_query_id("dlg_7", 3) == "dlg_7#3");
}

TEST_CASE("queries carry history but never labels") {
    const Corpus corpus("toy", Split::Test, kSpace,
                        {Dialogue{"d", {{"d", 0, "A", "one", "joy"}, {"d", 1, "B", "two", "sad"}}}});
    const auto queries = queries_from_corpus(corpus);
    REQUIRE(queries.size() == 2);
    CHECK(queries[1].query_id == "d#1");
    CHECK(queries[1].context == std::vector<Turn>{{"A", "one"}});
    CHECK(flatten_query(queries[1]) == "A: one\nB: two");
}

TEST_CASE("two-document index by hand") {
    const std::vector<std::string> docs{"a b", "b c"};
    const auto index = Bm25Index::build(docs);
    CHECK(index.doc_count() == 2);
    CHECK(index.avg_doc_length() == 2.0);
    const auto a = index.postings("a");
    REQUIRE(a.size() == 1);
    CHECK(a[0].example_id == 0);
    CHECK(a[0].frequency == 1);
    const auto b = index.postings("b");
    REQUIRE(b.size() == 2);
    CHECK(b[0].example_id == 0);
    CHECK(b[1].example_id == 1);
    CHECK(index.postings("zzz").empty());
}

TEST_CASE("BM25 details") {
    const std::vector<std::string> single{"solo"};
    CHECK(Bm25Index::build(single).idf("solo") == Catch::Approx(0.287682).margin(1e-6));
    CHECK(Bm25Index::build(single).avg_doc_length() == 1.0);
    const std::vector<std::string> rep{"a a", "b"};
    const auto index = Bm25Index::build(rep);
    CHECK(index.postings("a")[0].frequency == 2);
    const std::vector<std::string> q{"b"};
    CHECK(index.score(q, 0) == 0.0);
    CHECK(code_of([&] { index.score(q, 2); }) == ErrorCode::UnknownExample);
    const std::vector<std::string> none;
    CHECK(code_of([&] { Bm25Index::build(none); }) == ErrorCode::EmptyPool);
}

TEST_CASE("index scores agree with the formula on random micro-corpora") {
    Rng rng(17);
    for (int trial = 0; trial < 40; ++trial) {
        const auto pool = random_pool(rng, 1 + rng.below(5), 4);
        const auto index = Bm25Index::build(pool);
        Bm25Oracle oracle;
        for (const auto& ex : pool.examples()) {
            oracle.docs.push_back(ascii_tokens(reference_flatten(ex.context, ex.target_speaker, ex.target_text)));
        }
        const auto queries = random_queries(rng, 2, 4, "q");
        for (const auto& q : queries) {
            const auto tokens = ascii_tokens(reference_flatten(q.context, q.target_speaker, q.target_text));
            const auto all = index.score_all(tokens);
            for (std::size_t d = 0; d < pool.size(); ++d) {
                CHECK(std::abs(index.score(tokens, d) - oracle.score(tokens, d)) <= 1e-9);
                CHECK(std::abs(all[d] - oracle.score(tokens, d)) <= 1e-9);
            }
        }
    }
}

TEST_CASE("BM25 and dense top-k equal exhaustive scoring") {
    Rng rng(23);
    for (int trial = 0; trial < 10; ++trial) {
        auto pool = with_vectors(random_pool(rng, 12, 6), rng, 6);
        auto queries = random_queries(rng, 5, 6, "q");
        // Half the queries reuse pool dialogue ids, so exclusion is exercised.
        for (std::size_t i = 0; i < queries.size(); i += 2) queries[i].dialogue_id = pool.at(rng.below(pool.size())).dialogue_id;
        give_vectors(queries, rng, 6);

        Bm25Oracle oracle;
        for (const auto& ex : pool.examples()) {
            oracle.docs.push_back(ascii_tokens(reference_flatten(ex.context, ex.target_speaker, ex.target_text)));
        }
        const Retriever bm25(pool, Strategy::Bm25);
        const Retriever dense(pool, Strategy::Dense);
        for (const auto& q : queries) {
            const auto tokens = ascii_tokens(reference_flatten(q.context, q.target_speaker, q.target_text));
            std::vector<Ranked> lexical;
            std::vector<Ranked> vector;
            for (const auto& ex : pool.examples()) {
                if (ex.dialogue_id == q.dialogue_id) continue;
                lexical.push_back({ex.example_id, oracle.score(tokens, ex.example_id)});
                double s = 0;
                for (std::size_t j = 0; j < q.embedding.size(); ++j) {
                    s += static_cast<double>(q.embedding[j]) * pool.embeddings().row(ex.example_id)[j];
                }
                vector.push_back({ex.example_id, s});
            }
            for (std::size_t k : {1u, 5u, 1000u}) {
                const auto want_lex = oracle_top_k(lexical, k);
                const auto got_lex = bm25.retrieve(q, k, 0);
                REQUIRE(got_lex.size() == want_lex.size());
                for (std::size_t i = 0; i < got_lex.size(); ++i) {
                    CHECK(got_lex[i].example_id == want_lex[i].id);
                    CHECK(std::abs(got_lex[i].score - want_lex[i].score) <= 1e-9);
                    CHECK(got_lex[i].rank == i + 1);
                }
                const auto want_vec = oracle_top_k(vector, k);
                const auto got_vec = dense.retrieve(q, k, 0);
                REQUIRE(got_vec.size() == want_vec.size());
                for (std::size_t i = 0; i < got_vec.size(); ++i) {
                    CHECK(got_vec[i].example_id == want_vec[i].id);
                    CHECK(got_vec[i].score == want_vec[i].score);
                }
            }
        }
    }
}

TEST_CASE("exact self-match ranks first under dense retrieval") {
    Rng rng(4);
    const auto base = random_pool(rng, 6, 3);
    EmbeddingStore store;
    for (std::size_t i = 0; i < base.size(); ++i) {
        std::vector<float> v(base.size(), 0.0f);
        v[i] = 1.0f;
        store.set(i, v);
    }
    const auto pool = attach_embeddings(base, store);
    Query q;
    q.query_id = "x#0";
    q.dialogue_id = "elsewhere";
    q.target_speaker = "A";
    q.target_text = "hello";
    q.embedding = std::vector<float>(store.at(4).begin(), store.at(4).end());
    const auto hits = Retriever(pool, Strategy::Dense).retrieve(q, 3, 0);
    CHECK(hits[0].example_id == 4);
    CHECK(hits[0].score == 1.0);
}

TEST_CASE("hit-list invariants hold for every strategy") {
    Rng rng(31);
    const auto pool = with_vectors(random_pool(rng, 15, 5), rng, 4);
    auto queries = queries_from_corpus(test::random_corpus(rng, kSpace, 15, 5));  // same ids as the pool
    give_vectors(queries, rng, 4);
    for (auto strategy : {Strategy::Random, Strategy::Bm25, Strategy::Dense}) {
        const Retriever retriever(pool, strategy);
        for (const auto& q : queries) {
            const auto hits = retriever.retrieve(q, 5, 42);
            const auto eligible = pool.size() - pool.ids_in_dialogue(q.dialogue_id).size();
            CHECK(hits.size() == std::min<std::size_t>(5, eligible));
            std::set<std::size_t> seen;
            for (std::size_t i = 0; i < hits.size(); ++i) {
                CHECK(pool.at(hits[i].example_id).dialogue_id != q.dialogue_id);
                CHECK(hits[i].rank == i + 1);
                CHECK(seen.insert(hits[i].example_id).second);
                if (i > 0) CHECK(hits[i].score <= hits[i - 1].score);
            }
        }
    }
}

TEST_CASE("random retrieval is seeded") {
    Rng rng(2);
    const auto pool = random_pool(rng, 30, 4);
    const auto queries = random_queries(rng, 3, 3, "q");
    const Retriever retriever(pool, Strategy::Random);
    CHECK(retriever.retrieve(queries[0], 5, 9) == retriever.retrieve(queries[0], 5, 9));
    bool differs = false;
    for (std::uint64_t seed = 0; seed < 10 && !differs; ++seed) {
        differs = retriever.retrieve(queries[0], 5, seed) != retriever.retrieve(queries[0], 5, seed + 100);
    }
    CHECK(differs);
    for (const auto& h : retriever.retrieve(queries[0], 5, 9)) CHECK(h.score == 0.0);
}

TEST_CASE("random retrieval is roughly uniform over eligible examples") {
    Rng rng(12);
    const auto pool = random_pool(rng, 10, 3);
    Query q;
    q.query_id = "x#0";
    q.dialogue_id = pool.at(0).dialogue_id;
    q.target_speaker = "A";
    q.target_text = "t";
    const Retriever retriever(pool, Strategy::Random);
    std::map<std::size_t, std::size_t> counts;
    const int draws = 4000;
    for (int s = 0; s < draws; ++s) counts[retriever.retrieve(q, 1, static_cast<std::uint64_t>(s))[0].example_id]++;
    const auto eligible = pool.size() - pool.ids_in_dialogue(q.dialogue_id).size();
    CHECK(counts.size() == eligible);
    const double expected = static_cast<double>(draws) / static_cast<double>(eligible);
    for (const auto& [id, n] : counts) CHECK(std::abs(static_cast<double>(n) - expected) < 5 * std::sqrt(expected));
}

TEST_CASE("retrieval failure modes") {
    const Corpus one("toy", Split::Train, kSpace, {Dialogue{"d", {{"d", 0, "A", "x", "joy"}, {"d", 1, "B", "y", "sad"}}}});
    const auto pool = build_pool(one);
    auto q = queries_from_corpus(one)[1];
    CHECK(code_of([&] { Retriever(pool, Strategy::Bm25).retrieve(q, 5, 0); }) == ErrorCode::NoEligibleExamples);
    CHECK(code_of([&] { Retriever(pool, Strategy::Random).retrieve(q, 5, 0); }) == ErrorCode::NoEligibleExamples);
    CHECK(code_of([&] { Retriever(pool, Strategy::Dense); }) == ErrorCode::MissingEmbedding);

    EmbeddingStore store;
    store.set(0, {1.0f, 0.0f});
    store.set(1, {0.0f, 1.0f});
    const auto dense_pool = attach_embeddings(pool, store);
    q.dialogue_id = "other";
    CHECK(code_of([&] { Retriever(dense_pool, Strategy::Dense).retrieve(q, 1, 0); }) == ErrorCode::MissingEmbedding);
    q.embedding = {1.0f, 0.0f, 0.0f};
    CHECK(code_of([&] { Retriever(dense_pool, Strategy::Dense).retrieve(q, 1, 0); }) == ErrorCode::DimensionMismatch);
    q.embedding = {1.0f, 0.0f};
    CHECK(Retriever(dense_pool, Strategy::Dense).retrieve(q, 0, 0).empty());
    CHECK(parse_strategy("bm25") == Strategy::Bm25);
    CHECK(code_of([] { parse_strategy("tfidf"); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("shuffling pool labels leaves every hit list unchanged") {
    Rng rng(77);
    const auto corpus = test::random_corpus(rng, kSpace, 25, 8);
    const auto pool = with_vectors(build_pool(corpus), rng, 5);
    auto queries = random_queries(rng, 10, 5, "q");
    give_vectors(queries, rng, 5);

    auto examples = pool.examples();
    std::vector<std::string> labels;
    for (const auto& ex : examples) labels.push_back(ex.label);
    rng.shuffle(std::span<std::string>(labels));
    for (std::size_t i = 0; i < examples.size(); ++i) examples[i].label = labels[i];
    EmbeddingStore store;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        store.set(i, std::vector<float>(pool.embeddings().row(i).begin(), pool.embeddings().row(i).end()));
    }
    const auto shuffled = attach_embeddings(DemonstrationPool(pool.dataset_id(), pool.label_space(), examples), store);

    for (auto strategy : {Strategy::Random, Strategy::Bm25, Strategy::Dense}) {
        const Retriever a(pool, strategy);
        const Retriever b(shuffled, strategy);
        CHECK(a.retrieve_batch(queries, 5, 3) == b.retrieve_batch(queries, 5, 3));
    }
}

TEST_CASE("batch retrieval does not depend on the thread count") {
    Rng rng(64);
    const auto pool = with_vectors(random_pool(rng, 20, 6), rng, 3);
    auto queries = random_queries(rng, 20, 6, "q");
    give_vectors(queries, rng, 3);
    for (auto strategy : {Strategy::Random, Strategy::Bm25, Strategy::Dense}) {
        const Retriever retriever(pool, strategy);
        const auto one = retriever.retrieve_batch(queries, 4, 5, 1);
        CHECK(one == retriever.retrieve_batch(queries, 4, 5, 3));
        CHECK(one == retriever.retrieve_batch(queries, 4, 5, 8));
        for (std::size_t i = 0; i < queries.size(); ++i) CHECK(one[i] == retriever.retrieve(queries[i], 4, 5));
    }
}

TEST_CASE("hits file round trip") {
    test::TempDir tmp("hits");
    Rng rng(6);
    const auto pool = random_pool(rng, 10, 4);
    const auto queries = random_queries(rng, 4, 4, "q");
    const Retriever retriever(pool, Strategy::Bm25);
    std::vector<QueryHits> hits;
    for (const auto& q : queries) hits.push_back({q.query_id, retriever.retrieve(q, 3, 0)});
    write_hits(hits, tmp / "hits.jsonl");
    const auto back = read_hits(tmp / "hits.jsonl");
    REQUIRE(back.size() == hits.size());
    for (std::size_t i = 0; i < hits.size(); ++i) {
        CHECK(back[i].query_id == hits[i].query_id);
        REQUIRE(back[i].hits.size() == hits[i].hits.size());
        for (std::size_t j = 0; j < hits[i].hits.size(); ++j) {
            CHECK(back[i].hits[j].example_id == hits[i].hits[j].example_id);
            CHECK(back[i].hits[j].score == hits[i].hits[j].score);
        }
    }
}
