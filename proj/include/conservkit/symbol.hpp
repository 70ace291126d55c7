#pragma once

#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ck {

// Opaque function symbol. Arity 0 models named constants; a "unit" constant
// additionally satisfies s^2 = 1 and is folded away in even powers.
struct FunctionSymbol {
    std::string name;
    int arity = 0;
    bool unit = false;
    // Partial-derivative rules, one slot per argument; empty string = no rule.
    std::vector<std::string> d_rules;

    bool has_rule(int arg) const {
        return arg >= 0 && arg < static_cast<int>(d_rules.size()) && !d_rules[arg].empty();
    }
};

class SymbolTable {
public:
    SymbolTable();

    const FunctionSymbol& declare(const std::string& name, int arity, bool unit = false);
    // d(name)/d(arg_index) = target. Declares target with the same arity if absent.
    void add_rule(const std::string& name, int arg_index, const std::string& target);

    bool has(const std::string& name) const { return syms_.count(name) != 0; }
    const FunctionSymbol& get(const std::string& name) const;
    const FunctionSymbol* find(const std::string& name) const;

    // Symbol S with d(S)/d(arg) = name, if one was declared.
    std::optional<std::string> antiderivative(const std::string& name, int arg_index) const;

    std::vector<std::string> names() const;

private:
    std::map<std::string, FunctionSymbol> syms_;
};

// Process-wide table used by the parser and by derivative rules. Configured
// during startup and effectively frozen afterwards.
SymbolTable& global_symbols();

}  // namespace ck
