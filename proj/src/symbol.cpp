#include "conservkit/symbol.hpp"

#include <set>

namespace ck {

SymbolTable::SymbolTable() {
    // log is built in; its derivative is handled structurally.
    FunctionSymbol log;
    log.name = "log";
    log.arity = 1;
    syms_["log"] = log;
}

const FunctionSymbol& SymbolTable::declare(const std::string& name, int arity, bool unit) {
    if (name.empty()) throw std::invalid_argument("empty symbol name");
    auto it = syms_.find(name);
    if (it != syms_.end()) {
        if (it->second.arity != arity || it->second.unit != unit)
            throw std::invalid_argument("symbol '" + name + "' redeclared with different shape");
        return it->second;
    }
    FunctionSymbol s;
    s.name = name;
    s.arity = arity;
    s.unit = unit;
    if (unit && arity != 0) throw std::invalid_argument("unit constants must have arity 0");
    s.d_rules.assign(static_cast<size_t>(arity), "");
    return syms_.emplace(name, std::move(s)).first->second;
}

void SymbolTable::add_rule(const std::string& name, int arg_index, const std::string& target) {
    auto it = syms_.find(name);
    if (it == syms_.end()) throw std::invalid_argument("rule for undeclared symbol '" + name + "'");
    FunctionSymbol& s = it->second;
    if (arg_index < 0 || arg_index >= s.arity)
        throw std::invalid_argument("rule argument index out of range for '" + name + "'");
    declare(target, s.arity);
    s.d_rules[static_cast<size_t>(arg_index)] = target;

    // The rule graph must stay acyclic: following derivative edges from any
    // symbol has to terminate.
    std::set<std::string> seen;
    std::string cur = name;
    while (true) {
        if (!seen.insert(cur).second) {
            s.d_rules[static_cast<size_t>(arg_index)].clear();
            throw std::invalid_argument("derivative rule cycle through '" + cur + "'");
        }
        const FunctionSymbol& c = syms_.at(cur);
        std::string next;
        for (const auto& r : c.d_rules)
            if (!r.empty()) next = r;
        if (next.empty()) break;
        cur = next;
    }
}

const FunctionSymbol& SymbolTable::get(const std::string& name) const {
    auto it = syms_.find(name);
    if (it == syms_.end()) throw std::invalid_argument("unknown function symbol '" + name + "'");
    return it->second;
}

const FunctionSymbol* SymbolTable::find(const std::string& name) const {
    auto it = syms_.find(name);
    return it == syms_.end() ? nullptr : &it->second;
}

std::optional<std::string> SymbolTable::antiderivative(const std::string& name,
                                                       int arg_index) const {
    for (const auto& [n, s] : syms_) {
        if (arg_index >= 0 && arg_index < s.arity &&
            s.d_rules[static_cast<size_t>(arg_index)] == name)
            return n;
    }
    return std::nullopt;
}

std::vector<std::string> SymbolTable::names() const {
    std::vector<std::string> out;
    for (const auto& [n, s] : syms_) out.push_back(n);
    return out;
}

SymbolTable& global_symbols() {
    static SymbolTable table;
    return table;
}

}  // namespace ck
