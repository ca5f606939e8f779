int empty(void)
{
}

int two_ifs(int a, int b) { if (a) {} if (b) {} return 0; }

int loop_and(int *v, int n) {
  int i = 0;
  while (i < n && v[i] != 0) {
    i++;
  }
  return i;
}

int dispatch(int op, int x) {
  switch (op) {
    case 0: return x;
    case 1: return -x;
    case 2: return x > 0 ? x : -x;
    default: break;
  }
  for (; x > 100 || x < -100; x /= 2) {
  }
  return x;
}

int strings_and_comments(void) {
  /* if (x) while (y) */
  const char *s = "if && || ? case";
  // for (;;)
  return s[0] == 'i';
}
