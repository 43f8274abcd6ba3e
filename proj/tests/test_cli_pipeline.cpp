#include <doctest.h>
// filled in after the CLI lands
