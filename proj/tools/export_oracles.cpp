// Writes the scenario oracle tables to data/<name>.json. Run after editing a
// table in include/pfb/scenarios.hpp; the unit suite checks the files match.

#include <fstream>
#include <iostream>

#include <json.hpp>

#include "pfb/scenarios.hpp"

int main(int argc, char** argv) {
    const std::string dir = argc > 1 ? argv[1] : "data";
    for (const auto& name : pfb::scenario_names()) {
        const pfb::Scenario s = pfb::make_scenario(name);
        nlohmann::ordered_json doc;
        doc["scenario"] = s.name;
        doc["eps_f"] = s.eps_f;
        doc["oracle"] = nlohmann::ordered_json::array();
        for (const auto& e : s.oracle) {
            nlohmann::ordered_json row;
            row["quantity"] = e.quantity;
            row["point"] = nlohmann::ordered_json::array();
            for (int i = 0; i < e.point.size(); ++i) row["point"].push_back(e.point[i]);
            row["value"] = e.value;
            row["tolerance"] = e.tolerance;
            row["provenance"] = e.provenance;
            doc["oracle"].push_back(row);
        }
        const std::string path = dir + "/" + name + ".json";
        std::ofstream f(path, std::ios::binary);
        if (!f) {
            std::cerr << "cannot write " << path << "\n";
            return 1;
        }
        f << doc.dump(2) << "\n";
        std::cout << "wrote " << path << "\n";
    }
    return 0;
}
