#include "protocorrect/service.hpp"

#include <algorithm>
#include <chrono>
#include <unordered_set>

#include "httplib.h"
#include "json.hpp"

#include "protocorrect/classifier.hpp"
#include "protocorrect/clustering.hpp"

namespace protocorrect {

using json = nlohmann::ordered_json;

namespace {

struct ItemRef {
  const EmbeddingDataset* data;
  std::size_t row;
};

struct LogEntry {
  std::int64_t timestamp_ms;
  std::string item_id;
  ClassLabel label;
};

ApiResponse reply(int status, const json& body) { return {status, body.dump()}; }

ApiResponse fail(int status, std::string_view kind, const std::string& message) {
  return reply(status, json{{"error", kind}, {"message", message}});
}

ApiResponse fail(int status, const Error& e) { return fail(status, to_string(e.kind()), e.what()); }

json label_json(const ClassLabel& l) { return json{{"id", l.id}, {"name", l.name}}; }

json prediction_json(const Prediction& p) {
  json alts = json::array();
  for (const auto& a : p.alternatives) {
    alts.push_back(json{{"class_id", a.label.id}, {"class_name", a.label.name}, {"distance", a.distance}});
  }
  return json{{"class_id", p.label.id},
              {"class_name", p.label.name},
              {"distance", p.distance},
              {"proto_id", p.proto_id},
              {"alternatives", std::move(alts)}};
}

json stats_json(const StoreStats& s) {
  json per_class = json::object();
  for (const auto& [id, n] : s.per_class) per_class[std::to_string(id)] = n;
  return json{{"total", s.total},
              {"per_class", std::move(per_class)},
              {"server", s.server},
              {"user", s.user},
              {"budget", s.budget ? json(*s.budget) : json(nullptr)},
              {"dim", s.dim}};
}

std::optional<json> parse_body(const std::string& body) {
  auto j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  return j;
}

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

int int_param(const ApiRequest& req, const std::string& key, int fallback) {
  auto it = req.params.find(key);
  if (it == req.params.end() || it->second.empty()) return fallback;
  std::size_t used = 0;
  const int v = std::stoi(it->second, &used);
  if (used != it->second.size()) throw std::invalid_argument(key);
  return v;
}

}  // namespace

struct Service::Session {
  std::string id;
  EmbeddingDataset train;
  EmbeddingDataset test;
  ClassRegistry classes;
  ClassRegistry initial_classes;
  PrototypeStore store;
  std::string initial_snapshot;  // store document at session start
  CorrectnessSplit split;         // against the initial store
  double acc_base = 0.0;
  std::vector<LogEntry> log;
  std::unordered_map<std::string, ItemRef> items;

  Session(EmbeddingDataset tr, EmbeddingDataset te, PrototypeStore s)
      : train(std::move(tr)), test(std::move(te)), store(std::move(s)) {
    classes = ClassRegistry(test.classes);
    initial_classes = classes;
    initial_snapshot = store_to_json(store, -1);
    split = split_by_correctness(store, test);
    acc_base = 100.0 * static_cast<double>(split.correct.size()) / static_cast<double>(test.size());
    for (std::size_t i = 0; i < train.size(); ++i) items.emplace(train.records[i].id, ItemRef{&train, i});
    for (std::size_t i = 0; i < test.size(); ++i) items.emplace(test.records[i].id, ItemRef{&test, i});
  }
};

Service::Service(ServiceOptions options) : options_(options) {
  if (options_.top_k < 1) throw Error(ErrorKind::InvalidConfig, "top_k must be >= 1");
}

Service::~Service() = default;

void Service::invalidate_metrics() {
  std::lock_guard lock(metrics_mutex_);
  metrics_cache_.reset();
}

std::string Service::start_session(const SessionParams& params) {
  auto train = read_embeddings(params.train_path).subset(Split::Train);
  auto test = read_embeddings(params.test_path).subset(Split::Test);
  if (test.empty()) throw Error(ErrorKind::EmptyDataset, "no test records in " + params.test_path.string());
  if (train.dim != test.dim) throw Error(ErrorKind::DimensionMismatch, "train and test dims differ");
  if (train.classes != test.classes) throw Error(ErrorKind::FormatError, "train and test class lists differ");

  KMeansConfig kcfg;
  kcfg.k = params.k;
  kcfg.seed = params.seed;
  auto store = build_initial_prototypes(train, kcfg, params.store);
  auto session = std::make_unique<Session>(std::move(train), std::move(test), std::move(store));

  json classes = json::array();
  for (const auto& l : session->classes.labels()) classes.push_back(label_json(l));

  std::unique_lock lock(state_mutex_);
  session->id = "session-" + std::to_string(++session_counter_);
  json body{{"session_id", session->id},
            {"acc_base", session->acc_base},
            {"class_list", std::move(classes)},
            {"test_count", session->test.size()},
            {"dim", session->test.dim}};
  session_ = std::move(session);
  invalidate_metrics();
  return body.dump();
}

ApiResponse Service::handle(const ApiRequest& req) {
  try {
    if (req.method == "POST" && req.path == "/session") return post_session(req);
    {
      std::shared_lock lock(state_mutex_);
      if (!session_) return fail(409, "NoSession", "no active session; POST /session first");
    }
    if (req.method == "GET" && req.path == "/items") return get_items(req);
    if (req.method == "POST" && req.path == "/predict") return post_predict(req);
    if (req.method == "POST" && req.path == "/corrections") return post_corrections(req);
    if (req.method == "GET" && req.path == "/metrics") return get_metrics();
    if (req.method == "POST" && req.path == "/store/reset") return post_reset();
    if (req.method == "GET" && req.path == "/store/export") return get_export();
    if (req.method == "POST" && req.path == "/store/import") return post_import(req);
    return fail(404, "NotFound", req.method + " " + req.path);
  } catch (const Error& e) {
    return fail(500, e);
  } catch (const std::exception& e) {
    return fail(500, "Internal", e.what());
  }
}

ApiResponse Service::post_session(const ApiRequest& req) {
  const auto body = parse_body(req.body);
  if (!body) return fail(400, "BadRequest", "body must be a JSON object");
  SessionParams p;
  try {
    p.train_path = body->at("train_path").get<std::string>();
    p.test_path = body->at("test_path").get<std::string>();
    p.k = body->value("k", 3);
    if (body->contains("budget") && !(*body)["budget"].is_null()) {
      const auto b = (*body)["budget"].get<std::int64_t>();
      if (b < 1) return fail(400, "InvalidConfig", "budget must be >= 1 or null");
      p.store.budget = static_cast<std::size_t>(b);
    }
    p.store.protect_server = body->value("protect_server", false);
    p.seed = body->value("seed", std::uint64_t{0});
  } catch (const json::exception& e) {
    return fail(400, "BadRequest", e.what());
  }
  try {
    return {201, start_session(p)};
  } catch (const Error& e) {
    return fail(400, e);
  }
}

ApiResponse Service::get_items(const ApiRequest& req) {
  int page = 0;
  int page_size = 50;
  try {
    page = int_param(req, "page", 0);
    page_size = int_param(req, "page_size", 50);
  } catch (const std::exception&) {
    return fail(400, "BadRequest", "page and page_size must be integers");
  }
  if (page < 0 || page_size < 1 || page_size > 1000) {
    return fail(400, "BadRequest", "page >= 0 and 1 <= page_size <= 1000 required");
  }
  const auto split_it = req.params.find("split");
  Split split = Split::Test;
  try {
    if (split_it != req.params.end() && !split_it->second.empty()) split = parse_split(split_it->second);
  } catch (const Error& e) {
    return fail(400, e);
  }
  const auto only_it = req.params.find("only");
  const std::string only = only_it == req.params.end() || only_it->second.empty() ? "all" : only_it->second;
  if (only != "all" && only != "misclassified") return fail(400, "BadRequest", "only must be all|misclassified");

  std::shared_lock lock(state_mutex_);
  const Session& s = *session_;
  const EmbeddingDataset& data = split == Split::Test ? s.test : s.train;
  if (split == Split::Val) return reply(200, json{{"items", json::array()}, {"page", page}, {"page_size", page_size},
                                                  {"total", 0}, {"page_count", 0}});

  std::unordered_set<std::string> corrected;
  for (const auto& e : s.log) corrected.insert(e.item_id);

  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return data.records[a].id < data.records[b].id; });

  json items = json::array();
  std::size_t total = 0;
  const std::size_t first = static_cast<std::size_t>(page) * static_cast<std::size_t>(page_size);
  for (std::size_t row : order) {
    const auto& rec = data.records[row];
    const auto p = predict_readonly(s.store, data.embedding(row));
    if (only == "misclassified" && p.label.id == rec.label.id) continue;
    const std::size_t pos = total++;
    if (pos < first || pos >= first + static_cast<std::size_t>(page_size)) continue;
    json item{{"id", rec.id},
              {"label_hidden", !options_.reveal_labels},
              {"prediction", json{{"class_id", p.label.id}, {"class_name", p.label.name}}},
              {"distance", p.distance},
              {"image", rec.image ? json(*rec.image) : json(nullptr)},
              {"corrected", corrected.contains(rec.id)}};
    if (options_.reveal_labels) item["label"] = label_json(rec.label);
    // first components drive the UI glyph when there is no image
    json head = json::array();
    for (Eigen::Index d = 0; d < std::min<Eigen::Index>(3, data.dim); ++d) {
      head.push_back(data.embeddings(static_cast<Eigen::Index>(row), d));
    }
    item["embedding_head"] = std::move(head);
    items.push_back(std::move(item));
  }
  const std::size_t page_count = (total + static_cast<std::size_t>(page_size) - 1) / static_cast<std::size_t>(page_size);
  return reply(200, json{{"items", std::move(items)},
                         {"page", page},
                         {"page_size", page_size},
                         {"total", total},
                         {"page_count", page_count}});
}

ApiResponse Service::post_predict(const ApiRequest& req) {
  const auto body = parse_body(req.body);
  if (!body) return fail(400, "BadRequest", "body must be a JSON object");
  int k = options_.top_k;
  if (body->contains("k")) {
    if (!(*body)["k"].is_number_integer() || (*body)["k"].get<int>() < 1) {
      return fail(422, "InvalidConfig", "k must be a positive integer");
    }
    k = (*body)["k"].get<int>();
  }

  std::unique_lock lock(state_mutex_);
  Session& s = *session_;
  Embedding query;
  if (body->contains("item_id")) {
    if (!(*body)["item_id"].is_string()) return fail(400, "BadRequest", "item_id must be a string");
    auto it = s.items.find((*body)["item_id"].get<std::string>());
    if (it == s.items.end()) return fail(404, "UnknownItem", "no item '" + (*body)["item_id"].get<std::string>() + "'");
    query = it->second.data->embedding(it->second.row);
  } else if (body->contains("embedding")) {
    const auto& e = (*body)["embedding"];
    if (!e.is_array()) return fail(422, "BadVector", "embedding must be an array of numbers");
    query.resize(static_cast<Eigen::Index>(e.size()));
    for (std::size_t i = 0; i < e.size(); ++i) {
      if (!e[i].is_number()) return fail(422, "BadVector", "embedding must be an array of numbers");
      query[static_cast<Eigen::Index>(i)] = e[i].get<double>();
    }
  } else {
    return fail(400, "BadRequest", "provide embedding or item_id");
  }

  try {
    const auto p = predict_topk(s.store, query, k);
    return reply(200, prediction_json(p));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::EmptyStore) return fail(409, e);
    return fail(422, e);
  }
}

ApiResponse Service::post_corrections(const ApiRequest& req) {
  const auto body = parse_body(req.body);
  if (!body) return fail(400, "BadRequest", "body must be a JSON object");
  if (!body->contains("item_id") || !(*body)["item_id"].is_string() || !body->contains("label")) {
    return fail(400, "BadRequest", "item_id (string) and label required");
  }
  const auto item_id = (*body)["item_id"].get<std::string>();
  const auto& label_j = (*body)["label"];

  std::unique_lock lock(state_mutex_);
  Session& s = *session_;
  auto it = s.items.find(item_id);
  if (it == s.items.end()) return fail(404, "UnknownItem", "no item '" + item_id + "'");

  ClassLabel label;
  if (label_j.is_string()) {
    const auto name = label_j.get<std::string>();
    if (const auto* l = s.classes.find(name)) {
      label = *l;
    } else if (options_.open_class && !name.empty()) {
      label = {s.classes.next_id(), name};
    } else {
      return fail(409, "UnknownClass", "unknown label '" + name + "'");
    }
  } else if (label_j.is_number_integer()) {
    const auto* l = s.classes.find(label_j.get<ClassId>());
    if (l == nullptr) return fail(409, "UnknownClass", "unknown label id " + label_j.dump());
    label = *l;
  } else {
    return fail(400, "BadRequest", "label must be a class name or id");
  }

  try {
    CorrectionOptions opts;
    opts.open_class = options_.open_class;
    const auto out = correct(s.store, s.classes, it->second.data->embedding(it->second.row), label, opts);
    s.log.push_back({now_ms(), item_id, label});
    invalidate_metrics();
    return reply(200, json{{"added_proto_id", out.added_proto_id},
                           {"evicted_proto_id", out.evicted_proto_id ? json(*out.evicted_proto_id) : json(nullptr)},
                           {"store_size_after", out.store_size_after},
                           {"prediction_before",
                            out.prediction_before ? prediction_json(*out.prediction_before) : json(nullptr)},
                           {"prediction_after", prediction_json(out.prediction_after)},
                           {"label", label_json(label)},
                           {"log_length", s.log.size()}});
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::UnknownClass || e.kind() == ErrorKind::BudgetUnsatisfiable) return fail(409, e);
    return fail(422, e);
  }
}

ApiResponse Service::get_metrics() {
  std::shared_lock lock(state_mutex_);
  {
    std::lock_guard cache_lock(metrics_mutex_);
    if (metrics_cache_) return {200, *metrics_cache_};
  }
  const Session& s = *session_;
  const auto acc_e = accuracy(s.store, s.test, s.split.errors);
  const auto acc_c = accuracy(s.store, s.test, s.split.correct);
  const json body{{"acc_base", s.acc_base},
                  {"acc_E_live", acc_e ? json(*acc_e) : json(nullptr)},
                  {"acc_C_live", acc_c ? json(*acc_c) : json(nullptr)},
                  {"forgetting_live", acc_c ? json(100.0 - *acc_c) : json(nullptr)},
                  {"d_c_count", s.split.correct.size()},
                  {"d_e_count", s.split.errors.size()},
                  {"corrections", s.log.size()},
                  {"store_stats", stats_json(s.store.stats())}};
  std::lock_guard cache_lock(metrics_mutex_);
  metrics_cache_ = body.dump();
  return {200, *metrics_cache_};
}

ApiResponse Service::post_reset() {
  std::unique_lock lock(state_mutex_);
  Session& s = *session_;
  s.store = store_from_json(s.initial_snapshot);
  s.classes = s.initial_classes;
  s.log.clear();
  invalidate_metrics();
  return reply(200, json{{"reset", true}, {"store_size", s.store.size()}});
}

ApiResponse Service::get_export() {
  std::shared_lock lock(state_mutex_);
  return {200, store_to_json(session_->store, -1)};
}

ApiResponse Service::post_import(const ApiRequest& req) {
  std::optional<PrototypeStore> imported;
  try {
    imported = store_from_json(req.body);
  } catch (const Error& e) {
    return fail(422, e);
  }

  std::unique_lock lock(state_mutex_);
  Session& s = *session_;
  if (imported->dim() != s.test.dim) {
    return fail(422, "DimensionMismatch", "store dim " + std::to_string(imported->dim()) + " != session dim " +
                                              std::to_string(s.test.dim));
  }
  ClassRegistry classes = s.classes;
  for (const auto& e : imported->entries()) {
    if (classes.contains(e.label)) continue;
    if (!options_.open_class) {
      return fail(422, "UnknownClass", "store holds unknown class '" + e.label.name + "'");
    }
    try {
      classes.add(e.label);
    } catch (const Error& err) {
      return fail(422, err);
    }
  }
  s.store = std::move(*imported);
  s.classes = std::move(classes);
  s.log.clear();
  invalidate_metrics();
  return reply(200, json{{"imported", true}, {"store_size", s.store.size()}});
}

void Service::mount(httplib::Server& server, const std::optional<std::filesystem::path>& static_dir) {
  auto bridge = [this](const httplib::Request& req, httplib::Response& res) {
    ApiRequest api{req.method, req.path, {}, req.body};
    for (const auto& [k, v] : req.params) api.params.emplace(k, v);
    const auto out = handle(api);
    res.status = out.status;
    res.set_content(out.body, "application/json");
  };
  for (const char* path : {"/session", "/predict", "/corrections", "/store/reset", "/store/import"}) {
    server.Post(path, bridge);
  }
  for (const char* path : {"/items", "/metrics", "/store/export"}) server.Get(path, bridge);
  if (static_dir && std::filesystem::is_directory(*static_dir)) server.set_mount_point("/", static_dir->string());
}

}  // namespace protocorrect
