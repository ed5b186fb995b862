#pragma once

#include <string>

namespace wsdec {

// Fixed 6-decimal rendering used by the JSON writers ("-0.000000" becomes
// "0.000000" so outputs do not depend on the sign of a rounded zero).
std::string fixed6(double v);

// Quoted, escaped JSON string literal.
std::string json_string(const std::string& s);

}  // namespace wsdec
