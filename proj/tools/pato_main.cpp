#include "pato/cli.hpp"

int main(int argc, char** argv) { return pato::run(argc, argv); }
