/** Tiny flag parser shared by the render scripts. */

export interface Parsed {
  positional: string[];
  flags: Map<string, string>;
}

export function parseArgs(argv: string[]): Parsed {
  const positional: string[] = [];
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i];
    if (a.startsWith("--")) {
      const eq = a.indexOf("=");
      if (eq >= 0) {
        flags.set(a.slice(2, eq), a.slice(eq + 1));
      } else {
        flags.set(a.slice(2), argv[++i] ?? "");
      }
    } else {
      positional.push(a);
    }
  }
  return { positional, flags };
}

export function requireOut(parsed: Parsed): string {
  const out = parsed.flags.get("out");
  if (!out) {
    throw new Error("--out <image.png> is required");
  }
  return out;
}
