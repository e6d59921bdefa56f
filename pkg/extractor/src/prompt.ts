/** Prompt templating for label embedding: one {label} placeholder. */

export const DEFAULT_TEMPLATE = "a photo of a {label}";

const PLACEHOLDER = "{label}";

export class TemplateError extends Error {}

export function validateTemplate(template: string): void {
  const occurrences = template.split(PLACEHOLDER).length - 1;
  if (occurrences !== 1) {
    throw new TemplateError(
      `template must contain exactly one ${PLACEHOLDER} placeholder, found ${occurrences}`,
    );
  }
}

export function renderPrompt(template: string, label: string): string {
  validateTemplate(template);
  return template.replace(PLACEHOLDER, label);
}
