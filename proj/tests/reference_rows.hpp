#pragma once

#include <cstddef>

namespace wstest {

// Frozen reference rows for the screening summary: per-SD log-scale
// coefficient and the percent increase printed beside it. Coefficients
// printed as "<0.0001" are stored as 0.
struct RefRow {
    const char* analyte;
    const char* chem_class;
    double coef;
    double increase;
};

inline constexpr RefRow kReferenceRows[] = {
    {"Chloroform", "Disinfection byproducts", -0.0099, -0.98},
    {"Dibromoacetic Acid", "Disinfection byproducts", -0.0066, -0.66},
    {"Dichloroacetic Acid", "Disinfection byproducts", -0.0062, -0.62},
    {"Trihalomethanes (TTHM)", "Disinfection byproducts", -0.004, -0.40},
    {"Ethylene Dibromide", "Disinfection byproducts", -0.0041, -0.41},
    {"Bromodichloromethane", "Disinfection byproducts", -0.0024, -0.24},
    {"Total Haloacetic Acids (HAA5)", "Disinfection byproducts", -0.0025, -0.25},
    {"Bromoform", "Disinfection byproducts", 0.0014, 0.14},
    {"Dibromochloromethane", "Disinfection byproducts", 0.0017, 0.17},
    {"Trichloroacetic Acid", "Disinfection byproducts", 0.0002, 0.02},
    {"Carbonate Alkalinity", "Inorganic Chemicals", 0.0028, 0.28},
    {"Perchlorate", "Inorganic Chemicals", 0.0074, 0.75},
    {"Iron", "Inorganic Chemicals", 0.0045, 0.45},
    {"Total Alkalinity", "Inorganic Chemicals", -0.0049, -0.49},
    {"Nitrate", "Inorganic Chemicals", -0.0073, -0.73},
    {"Aluminum", "Inorganic Chemicals", 0.0027, 0.27},
    {"Barium", "Inorganic Chemicals", 0.0014, 0.14},
    {"Chromium Hex", "Inorganic Chemicals", 0.0021, 0.21},
    {"Free Copper", "Inorganic Chemicals", 0.0011, 0.11},
    {"Fluoride", "Inorganic Chemicals", 0.0022, 0.22},
    {"Sodium", "Inorganic Chemicals", 0.0005, 0.05},
    {"Chloride", "Inorganic Chemicals", 0.0005, 0.05},
    {"Total Boron", "Inorganic Chemicals", -0.0013, -0.13},
    {"Magnesium", "Inorganic Chemicals", -0.0003, -0.03},
    {"Mercury", "Inorganic Chemicals", 0.0008, 0.08},
    {"Potassium", "Inorganic Chemicals", -0.0005, -0.05},
    {"Sulfate", "Inorganic Chemicals", -0.0005, -0.05},
    {"Arsenic", "Inorganic Chemicals", -0.0006, -0.06},
    {"Bicarbonate Alkalinity", "Inorganic Chemicals", 0.0001, 0.01},
    {"Calcium", "Inorganic Chemicals", -0.0001, -0.01},
    {"Cyanide", "Inorganic Chemicals", -0.0003, -0.03},
    {"Manganese", "Inorganic Chemicals", -0.0003, -0.03},
    {"Nitrate Nitrite", "Inorganic Chemicals", -0.0001, -0.01},
    {"Total Carbon", "Physical Parameters", -0.001, -0.10},
    {"Color", "Physical Parameters", 0.0016, 0.16},
    {"Odor", "Physical Parameters", -0.0012, -0.12},
    {"pH", "Physical Parameters", 0.0017, 0.17},
    {"Aggressive Index", "Physical Parameters", -0.0014, -0.14},
    {"Hardness (Total as CaCO3)", "Physical Parameters", -0.0006, -0.06},
    {"Total Dissolved Solids (TDS)", "Physical Parameters", -0.0006, -0.06},
    {"Conductivity", "Physical Parameters", -0.0006, -0.06},
    {"Hydroxide as Calcium Carbonate", "Physical Parameters", 0.0, 0.0},
    {"Turbidity", "Physical Parameters", 0.0001, 0.01},
    {"Radium 228", "Radionuclides", 0.0072, 0.72},
    {"Combined Uranium", "Radionuclides", -0.0052, -0.52},
    {"Gross Alpha Particle Activity", "Radionuclides", 0.0003, 0.02},
    {"Foaming Agents/Surfactants", "SOCs", 0.0046, 0.46},
    {"Aldicarb Sulfone", "SOCs", 0.0029, 0.29},
    {"Heptachlor", "SOCs", -0.0001, -0.01},
    {"Heptachlor Epoxide", "SOCs", 0.0, 0.0},
    {"1,2-Dibromo-3-Chloropropane", "VOCs", -0.0056, -0.55},
    {"p-Isopropyltoluene", "VOCs", 0.0035, 0.35},
    {"1,2,3-Trichloropropane", "VOCs", 0.0011, 0.11},
    {"Trichlorofluoromethane", "VOCs", 0.0009, 0.09},
};

inline constexpr std::size_t kReferenceRowCount =
    sizeof(kReferenceRows) / sizeof(kReferenceRows[0]);

} // namespace wstest
