/** Dynamic operation counting for self-reports. */

export class OpCounters {
  private counts = new Map<string, number>();

  bump(name: string, by = 1): void {
    this.counts.set(name, (this.counts.get(name) ?? 0) + by);
  }

  toObject(): Record<string, number> {
    const out: Record<string, number> = {};
    for (const name of [...this.counts.keys()].sort()) {
      out[name] = this.counts.get(name)!;
    }
    return out;
  }

  reset(): void {
    this.counts.clear();
  }
}
