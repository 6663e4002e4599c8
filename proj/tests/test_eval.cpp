#include <doctest.h>
#include "cupi/eval.hpp"
