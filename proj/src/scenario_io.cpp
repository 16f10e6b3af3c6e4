#include "rebal/scenario_io.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace rebal {

using json = nlohmann::ordered_json;

std::string format_amount(double x) {
    char buf[40];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, x);
        if (std::strtod(buf, nullptr) == x) break;
    }
    return buf;
}

namespace {

double parse_amount(const json& v, const std::string& what) {
    if (v.is_string()) {
        const std::string& s = v.get_ref<const std::string&>();
        char* end = nullptr;
        const double x = std::strtod(s.c_str(), &end);
        if (end == s.c_str() || *end != '\0')
            throw ParseError(what + ": invalid decimal string '" + s + "'");
        return x;
    }
    if (v.is_number()) return v.get<double>();
    throw ParseError(what + ": expected a decimal string");
}

json function_to_json(const TradingFunction& f) {
    json o;
    switch (f.kind()) {
        case FnKind::ConstantProduct:
            o["kind"] = "constant_product";
            break;
        case FnKind::WeightedGeometricMean:
            o["kind"] = "weighted_geometric_mean";
            o["w1"] = format_amount(f.param1());
            o["w2"] = format_amount(f.param2());
            break;
        case FnKind::Linear:
            o["kind"] = "linear";
            o["a"] = format_amount(f.param1());
            o["b"] = format_amount(f.param2());
            break;
    }
    return o;
}

TradingFunction function_from_json(const json& o) {
    if (!o.is_object() || !o.contains("kind"))
        throw ParseError("trading function needs a 'kind'");
    const std::string kind = o.at("kind").get<std::string>();
    if (kind == "constant_product") return TradingFunction::constant_product();
    if (kind == "weighted_geometric_mean")
        return TradingFunction::weighted_geometric_mean(
            parse_amount(o.at("w1"), "function.w1"), parse_amount(o.at("w2"), "function.w2"));
    if (kind == "linear")
        return TradingFunction::linear(parse_amount(o.at("a"), "function.a"),
                                       parse_amount(o.at("b"), "function.b"));
    throw ParseError("unknown trading function kind '" + kind + "'");
}

std::string mode_name(Mode m) {
    switch (m) {
        case Mode::Active: return "active";
        case Mode::Passive: return "passive";
        case Mode::Oracle: return "oracle";
    }
    return "active";
}

Mode mode_from_name(const std::string& s) {
    if (s == "active") return Mode::Active;
    if (s == "passive") return Mode::Passive;
    if (s == "oracle") return Mode::Oracle;
    throw ParseError("unknown mode '" + s + "'");
}

json basket_to_json(const Basket& b) {
    json o = json::object();
    for (const auto& [token, amount] : b) o[token.symbol] = format_amount(amount);
    return o;
}

Basket basket_from_json(const json& o, const std::string& what) {
    Basket b;
    if (o.is_null()) return b;
    if (!o.is_object()) throw ParseError(what + ": expected an object");
    for (const auto& [key, val] : o.items()) b[{key}] = parse_amount(val, what);
    return b;
}

}  // namespace

Configuration parse_scenario(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("invalid JSON: ") + e.what());
    }
    try {
        if (!root.is_object()) throw ParseError("scenario root must be an object");
        if (root.value("version", "") != "v1")
            throw ParseError("unsupported scenario version");

        Configuration config;
        for (const auto& t : root.at("tokens")) {
            if (!t.is_string()) throw ParseError("tokens must be strings");
            config.tokens.push_back({t.get<std::string>()});
        }
        for (const auto& c : root.at("cfmms")) {
            CfmmState state;
            const auto& toks = c.at("tokens");
            const auto& pools = c.at("pools");
            if (!toks.is_array() || toks.size() != 2 || !pools.is_array() ||
                pools.size() != 2)
                throw ParseError("each cfmm needs two tokens and two pools");
            state.pool_tokens = {TokenId{toks[0].get<std::string>()},
                                 TokenId{toks[1].get<std::string>()}};
            state.pools = {parse_amount(pools[0], "pool"), parse_amount(pools[1], "pool")};
            state.function = function_from_json(c.at("function"));
            if (c.contains("fee")) state.fee = parse_amount(c.at("fee"), "fee");
            if (c.contains("mode")) state.mode = mode_from_name(c.at("mode").get<std::string>());
            config.cfmms.push_back(std::move(state));
        }
        validate(config);
        return config;
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed scenario: ") + e.what());
    } catch (const ValidationError& e) {
        throw ParseError(std::string("invalid scenario: ") + e.what());
    }
}

std::string serialize_scenario(const Configuration& config) {
    json root;
    root["version"] = "v1";
    root["tokens"] = json::array();
    for (const auto& t : config.tokens) root["tokens"].push_back(t.symbol);
    root["cfmms"] = json::array();
    for (const auto& c : config.cfmms) {
        json o;
        o["tokens"] = {c.pool_tokens[0].symbol, c.pool_tokens[1].symbol};
        o["pools"] = {format_amount(c.pools[0]), format_amount(c.pools[1])};
        o["function"] = function_to_json(c.function);
        o["fee"] = format_amount(c.fee);
        o["mode"] = mode_name(c.mode);
        root["cfmms"].push_back(std::move(o));
    }
    return root.dump(2) + "\n";
}

Configuration load_scenario(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open scenario file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str());
}

void save_scenario(const Configuration& config, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write scenario file: " + path);
    out << serialize_scenario(config);
}

std::string serialize_plan(const ExecutionPlan& plan) {
    json root;
    root["version"] = "v1";
    root["borrow"] = basket_to_json(plan.borrow);
    root["steps"] = json::array();
    for (const auto& step : plan.steps) {
        json o;
        if (const auto* tr = std::get_if<TransferStep>(&step)) {
            o["type"] = "transfer";
            if (tr->from.has_value())
                o["from"] = {{"cfmm", tr->from->cfmm}, {"pool", tr->from->pool}};
            else
                o["from"] = "agent";
            if (tr->to.has_value())
                o["to"] = {{"cfmm", tr->to->cfmm}, {"pool", tr->to->pool}};
            else
                o["to"] = "agent";
            o["token"] = tr->token.symbol;
            o["amount"] = format_amount(tr->amount);
        } else {
            const auto& trade = std::get<PlanTrade>(step);
            o["type"] = "trade";
            o["cfmm"] = trade.cfmm;
            o["token_in"] = trade.token_in.symbol;
            o["amount_in"] = format_amount(trade.amount_in);
            o["token_out"] = trade.token_out.symbol;
            o["expected_out"] = format_amount(trade.expected_out);
            o["fee"] = format_amount(trade.fee_paid);
        }
        root["steps"].push_back(std::move(o));
    }
    root["repay"] = basket_to_json(plan.repay);
    if (!plan.expected_final.empty()) {
        root["expected_final_pools"] = json::array();
        for (const auto& pools : plan.expected_final)
            root["expected_final_pools"].push_back(
                {format_amount(pools[0]), format_amount(pools[1])});
    }
    return root.dump(2) + "\n";
}

ExecutionPlan parse_plan(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("invalid JSON: ") + e.what());
    }
    try {
        if (root.value("version", "") != "v1") throw ParseError("unsupported plan version");
        ExecutionPlan plan;
        plan.borrow = basket_from_json(root.value("borrow", json::object()), "borrow");
        plan.repay = basket_from_json(root.value("repay", json::object()), "repay");
        for (const auto& o : root.at("steps")) {
            const std::string type = o.at("type").get<std::string>();
            if (type == "transfer") {
                TransferStep tr;
                auto parse_end = [&](const json& e) -> std::optional<PoolRef> {
                    if (e.is_string() && e.get<std::string>() == "agent") return std::nullopt;
                    return PoolRef{e.at("cfmm").get<std::size_t>(), e.at("pool").get<int>()};
                };
                tr.from = parse_end(o.at("from"));
                tr.to = parse_end(o.at("to"));
                tr.token = {o.at("token").get<std::string>()};
                tr.amount = parse_amount(o.at("amount"), "transfer amount");
                plan.steps.push_back(tr);
            } else if (type == "trade") {
                PlanTrade trade;
                trade.cfmm = o.at("cfmm").get<std::size_t>();
                trade.token_in = {o.at("token_in").get<std::string>()};
                trade.amount_in = parse_amount(o.at("amount_in"), "trade amount");
                trade.token_out = {o.at("token_out").get<std::string>()};
                trade.expected_out = parse_amount(o.at("expected_out"), "trade output");
                trade.fee_paid = parse_amount(o.value("fee", json("0")), "trade fee");
                plan.steps.push_back(trade);
            } else {
                throw ParseError("unknown step type '" + type + "'");
            }
        }
        if (root.contains("expected_final_pools")) {
            for (const auto& p : root.at("expected_final_pools"))
                plan.expected_final.push_back(
                    {parse_amount(p.at(0), "pool"), parse_amount(p.at(1), "pool")});
        }
        return plan;
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed plan: ") + e.what());
    }
}

ExecutionPlan load_plan(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open plan file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_plan(ss.str());
}

void save_plan(const ExecutionPlan& plan, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write plan file: " + path);
    out << serialize_plan(plan);
}

}  // namespace rebal
