#include <cstdio>
int main() { std::puts("adc: build scaffold"); return 0; }
