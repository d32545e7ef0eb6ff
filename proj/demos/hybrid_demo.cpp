#include "tmvi/tmvi.hpp"
int main() { return 0; }
