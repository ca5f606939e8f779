#include <string.h>

static int mix(int a, int b) {
  return (a * 31) ^ b;
}

int verify(const char *key, int n) {
  int i, h = 7;
#pragma esp asset begin(integrity, weight=2.0, id=verify_core)
  for (i = 0; i < n; i++) {
    if (key[i] == 0) break;
    h = mix(h, key[i]);
  }
#pragma esp asset end
  return h == 0x5a5a;
}

int main(int argc, char **argv) {
  if (argc < 2) return 1;
  return verify(argv[1], (int)strlen(argv[1])) ? 0 : 2;
}
