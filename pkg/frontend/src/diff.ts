/** Unified-diff text to a line model for plain colored rendering. */

export type DiffLineKind = "add" | "del" | "hunk" | "meta" | "context";

export interface DiffLine {
  kind: DiffLineKind;
  text: string;
}

export function parseDiff(text: string): DiffLine[] {
  const lines: DiffLine[] = [];
  for (const raw of text.split("\n")) {
    if (raw.startsWith("+++") || raw.startsWith("---")) {
      lines.push({ kind: "meta", text: raw });
    } else if (raw.startsWith("@@")) {
      lines.push({ kind: "hunk", text: raw });
    } else if (raw.startsWith("+")) {
      lines.push({ kind: "add", text: raw });
    } else if (raw.startsWith("-")) {
      lines.push({ kind: "del", text: raw });
    } else if (
      raw.startsWith("diff ") ||
      raw.startsWith("index ") ||
      raw.startsWith("commit ") ||
      raw.startsWith("Author: ") ||
      raw.startsWith("Date: ") ||
      raw.startsWith("new file") ||
      raw.startsWith("deleted file") ||
      raw.startsWith("rename ") ||
      raw.startsWith("similarity ")
    ) {
      lines.push({ kind: "meta", text: raw });
    } else {
      lines.push({ kind: "context", text: raw });
    }
  }
  return lines;
}

export function diffCounts(lines: DiffLine[]): { added: number; deleted: number } {
  let added = 0;
  let deleted = 0;
  for (const line of lines) {
    if (line.kind === "add") added += 1;
    if (line.kind === "del") deleted += 1;
  }
  return { added, deleted };
}
