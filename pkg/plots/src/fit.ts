/** Least-squares slope of y against x (used on log-log axes). */
export function slope(xs: number[], ys: number[]): number {
  const n = xs.length;
  if (n < 2 || n !== ys.length) {
    throw new Error(`need two matched samples to fit a slope, got ${xs.length}/${ys.length}`);
  }
  const mx = xs.reduce((a, b) => a + b, 0) / n;
  const my = ys.reduce((a, b) => a + b, 0) / n;
  let sxx = 0;
  let sxy = 0;
  for (let i = 0; i < n; i++) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (sxx === 0) {
    throw new Error("degenerate abscissa: all x equal");
  }
  return sxy / sxx;
}

export function logLogSlope(xs: number[], ys: number[]): number {
  for (const v of [...xs, ...ys]) {
    if (!(v > 0)) {
      throw new Error("log-log fit needs positive data");
    }
  }
  return slope(xs.map(Math.log), ys.map(Math.log));
}
